use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CVPlan, EvalError};
use crate::seed::{derive_seed, rng_from_seed, Rng};

/// One sampled configuration: hyperparameter name to value.
pub type ParamPoint = BTreeMap<String, f64>;

/// Values a hyperparameter may take. In config files a list is a discrete
/// set and a table `{ low, high, log, integer }` is a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Choice(Vec<f64>),
    Range {
        low: f64,
        high: f64,
        /// Sample uniformly in log space; needs `low > 0`.
        #[serde(default)]
        log: bool,
        /// Round the draw to the nearest integer.
        #[serde(default)]
        integer: bool,
    },
}

impl Domain {
    fn validate(&self, name: &str) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(format!("domain `{name}`: {m}")));
        match *self {
            Domain::Choice(ref v) if v.is_empty() => bad("empty choice set"),
            Domain::Choice(ref v) if v.iter().any(|x| !x.is_finite()) => bad("non-finite choice"),
            Domain::Range { low, high, .. } if !(low.is_finite() && high.is_finite() && low <= high) => {
                bad("range needs finite low ≤ high")
            }
            Domain::Range { low, log: true, .. } if low <= 0.0 => bad("log range needs low > 0"),
            _ => Ok(()),
        }
    }

    fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            Domain::Choice(ref v) => v[rng.random_range(0..v.len())],
            Domain::Range { low, high, log, integer } => {
                let u: f64 = rng.random();
                let v = if log {
                    (low.ln() + u * (high.ln() - low.ln())).exp()
                } else {
                    low + u * (high - low)
                };
                if integer {
                    v.round().clamp(low.ceil(), high.floor())
                } else {
                    v
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSearchSpec {
    pub domains: BTreeMap<String, Domain>,
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GridSearchSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.budget == 0 {
            return Err(EvalError::InvalidConfig("search budget must be at least 1".into()));
        }
        self.domains.iter().try_for_each(|(k, d)| d.validate(k))
    }

    /// `budget` configurations drawn independently; within a draw the
    /// hyperparameters are sampled in name order.
    pub fn sample(&self) -> Result<Vec<ParamPoint>, EvalError> {
        self.validate()?;
        let mut rng = rng_from_seed(derive_seed(self.seed, "search/sample"));
        Ok((0..self.budget)
            .map(|_| self.domains.iter().map(|(k, d)| (k.clone(), d.sample(&mut rng))).collect())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: ParamPoint,
    /// Mean AUC over scorable folds; `None` when the budget is 1 (no
    /// comparison to make, so cross-validation is skipped) or no fold could
    /// be scored.
    pub cv_auc: Option<f64>,
    pub trials: Vec<(ParamPoint, Option<f64>)>,
}

/// Scores each sampled configuration by mean cross-validated AUC and returns
/// the argmax; ties go to the earliest sample. `eval_fn` returns `None` for a
/// fold it cannot score (a single-class validation fold); such folds are left
/// out of the mean. Configurations × folds run in parallel and are reduced in
/// sample order.
pub fn random_grid_search<M, E, T, V>(
    spec: &GridSearchSpec,
    cv: &CVPlan,
    train_fn: T,
    eval_fn: V,
) -> Result<SearchOutcome, E>
where
    E: From<EvalError> + Send,
    T: Fn(&ParamPoint, &[usize]) -> Result<M, E> + Sync,
    V: Fn(&M, &[usize]) -> Result<Option<f64>, E> + Sync,
{
    let points = spec.sample()?;
    if points.len() == 1 {
        let best = points[0].clone();
        return Ok(SearchOutcome {
            trials: vec![(best.clone(), None)],
            best,
            cv_auc: None,
        });
    }
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..cv.k).map(move |f| (p, f))).collect();
    let scores: Vec<Option<f64>> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let model = train_fn(&points[p], &cv.train_indices(f))?;
            eval_fn(&model, &cv.validation_indices(f))
        })
        .collect::<Result<_, E>>()?;
    let mut trials = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64)> = None;
    for (p, point) in points.iter().enumerate() {
        let fold_scores: Vec<f64> = scores[p * cv.k..(p + 1) * cv.k].iter().flatten().copied().collect();
        let mean = (!fold_scores.is_empty()).then(|| fold_scores.iter().sum::<f64>() / fold_scores.len() as f64);
        if let Some(m) = mean {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((p, m));
            }
        }
        trials.push((point.clone(), mean));
    }
    let (p, cv_auc) = best.map_or((0, None), |(p, m)| (p, Some(m)));
    Ok(SearchOutcome {
        best: points[p].clone(),
        cv_auc,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench_models::{train_logistic, LogisticConfig, Penalty};
    use crate::deep_models::{mlp_forward, mlp_train, ForwardMode, MLPConfig};
    use crate::evaluation::{kfold_split, roc_auc};
    use ndarray::{Array2, Axis};

    fn spec(domains: &[(&str, Domain)], budget: usize, seed: u64) -> GridSearchSpec {
        GridSearchSpec {
            domains: domains.iter().map(|(k, d)| (k.to_string(), d.clone())).collect(),
            budget,
            seed,
        }
    }

    #[test]
    fn budget_one_returns_the_single_draw() {
        let s = spec(&[("lambda", Domain::Range { low: 1e-4, high: 1.0, log: true, integer: false })], 1, 2);
        let cv = kfold_split(10, 2, 0).unwrap();
        let out = random_grid_search::<(), EvalError, _, _>(&s, &cv, |_, _| panic!("no training"), |_, _| Ok(None)).unwrap();
        assert_eq!(out.best, s.sample().unwrap()[0]);
        assert_eq!(out.cv_auc, None);
    }

    #[test]
    fn zero_budget_and_bad_domains_are_rejected() {
        assert!(spec(&[], 0, 0).validate().is_err());
        assert!(spec(&[("x", Domain::Choice(vec![]))], 1, 0).validate().is_err());
        assert!(spec(&[("x", Domain::Range { low: 0.0, high: 1.0, log: true, integer: false })], 1, 0).validate().is_err());
    }

    #[test]
    fn samples_respect_domains_and_seed() {
        let s = spec(
            &[
                ("k", Domain::Range { low: 1.0, high: 9.0, log: false, integer: true }),
                ("c", Domain::Choice(vec![0.5, 2.0])),
                ("lr", Domain::Range { low: 1e-3, high: 1e-1, log: true, integer: false }),
            ],
            50,
            4,
        );
        let pts = s.sample().unwrap();
        assert_eq!(pts, s.sample().unwrap());
        for p in &pts {
            assert!(p["k"].fract() == 0.0 && (1.0..=9.0).contains(&p["k"]));
            assert!(p["c"] == 0.5 || p["c"] == 2.0);
            assert!((1e-3..=1e-1).contains(&p["lr"]));
        }
    }

    /// A zero learning rate leaves the network at initialization, so search
    /// over {0, 0.05} must pick the one that trains.
    #[test]
    fn broken_learning_rate_loses() {
        let n = 400;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| (((i * 31 + j * 17) % 97) as f64 / 48.0) - 1.0);
        let y: Vec<u8> = x.rows().into_iter().map(|r| u8::from(r[0] + 0.5 * r[1] > 0.0)).collect();
        let s = spec(&[("learning_rate", Domain::Choice(vec![0.0, 0.05]))], 8, 1);
        assert!(s.sample().unwrap().iter().any(|p| p["learning_rate"] == 0.0));
        let cv = kfold_split(n, 4, 2).unwrap();
        let out = random_grid_search(
            &s,
            &cv,
            |p, idx| {
                let cfg = MLPConfig { hidden_sizes: vec![8], epochs: 20, batch_size: 32, learning_rate: p["learning_rate"], batch_norm: false, dropout_p: 0.0, seed: 3, ..Default::default() };
                let yy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                mlp_train(&x.select(Axis(0), idx), &yy, &cfg).map(|(m, _)| m).map_err(|e| EvalError::InvalidConfig(e.to_string()))
            },
            |m, idx| {
                let p = mlp_forward(m, x.select(Axis(0), idx).view(), ForwardMode::Infer, 0).unwrap();
                let yy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                Ok(roc_auc(&p, &yy).ok())
            },
        )
        .unwrap();
        assert_eq!(out.best["learning_rate"], 0.05);
        assert!(out.cv_auc.unwrap() > 0.9);
    }

    #[test]
    fn ties_go_to_the_first_sample() {
        let s = spec(&[("lambda", Domain::Choice(vec![1e-3, 1e-2, 1e-1]))], 6, 5);
        let cv = kfold_split(30, 3, 0).unwrap();
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64);
        let y: Vec<u8> = (0..30).map(|i| u8::from(i >= 15)).collect();
        let out = random_grid_search(
            &s,
            &cv,
            |p, idx| {
                let yy: Vec<u8> = idx.iter().map(|&i| y[i]).collect();
                train_logistic(&x.select(Axis(0), idx), &yy, &LogisticConfig { penalty: Penalty::L2(p["lambda"]), ..Default::default() })
                    .map_err(|e| EvalError::InvalidConfig(e.to_string()))
            },
            |_, _| Ok(Some(0.7)),
        )
        .unwrap();
        assert_eq!(out.best, s.sample().unwrap()[0]);
    }
}
