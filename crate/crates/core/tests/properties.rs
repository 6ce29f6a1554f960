//! Property tests for the cross-module invariants.

use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;

use seqchoice::data::{parse_dataset_reader, synth_generate, write_dataset, PlantedSignal, SynthConfig};
use seqchoice::evaluation::{kfold_split, roc_auc};
use seqchoice::game_sim::{argmax_choice, choice_scores, joint_argmax_bruteforce};
use seqchoice::generative::dtw_distance;
use seqchoice::linalg::{sigmoid, softmax};
use seqchoice::points::daily_points;
use seqchoice::prep::{balance_dataset, discretize, mrmr_select, BalanceConfig, StandardizationStats};
use seqchoice::seed::derive_seed;
use seqchoice::stats::{round_half_up, savings_delta, two_sample_ttest, TTestVariant};

/// Scores with both classes present.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..120).prop_flat_map(|n| {
        (prop::collection::vec(-50i32..50, n), prop::collection::vec(0u8..=1, n)).prop_map(|(s, mut y)| {
            y[0] = 0;
            y[1] = 1;
            (s.into_iter().map(f64::from).collect(), y)
        })
    })
}

fn series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..24)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auc_is_a_probability_with_flip_symmetry((s, y) in scored_labels()) {
        let a = roc_auc(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        prop_assert!((roc_auc(&s, &flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((roc_auc(&neg, &y).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn auc_ignores_increasing_transforms((s, y) in scored_labels(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        // Integer scores keep the cubic strictly increasing in floating point.
        let t: Vec<f64> = s.iter().map(|v| scale * v.powi(3) + shift).collect();
        prop_assert_eq!(roc_auc(&t, &y).unwrap(), roc_auc(&s, &y).unwrap());
    }

    #[test]
    fn points_vanish_at_baseline_and_scale_with_booster(b in 1.0f64..1440.0, u in 0.0f64..2880.0, s in 0.0f64..400.0) {
        prop_assert_eq!(daily_points(b, b, s).unwrap(), 0.0);
        prop_assert_eq!(daily_points(b, 0.0, s).unwrap(), s);
        let p = daily_points(b, u, s).unwrap();
        prop_assert!((daily_points(b, u, 2.0 * s).unwrap() - 2.0 * p).abs() <= 1e-9 * p.abs().max(1.0));
        if u > b && s > 0.0 {
            prop_assert!(p < 0.0);
        }
    }

    #[test]
    fn dtw_is_a_symmetric_nonnegative_discrepancy(a in series(), b in series()) {
        let ab = dtw_distance(&a, &b).unwrap();
        prop_assert!(ab.score >= 0.0);
        prop_assert_eq!(ab.score, dtw_distance(&b, &a).unwrap().score);
        prop_assert_eq!(dtw_distance(&a, &a).unwrap().score, 0.0);
        prop_assert!(ab.path_len >= a.len().max(b.len()) && ab.path_len <= a.len() + b.len() - 1);
        if a.len() == b.len() {
            let diagonal: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
            prop_assert!(ab.score <= diagonal + 1e-9);
        }
    }

    #[test]
    fn separable_choice_matches_joint_argmax(
        scores in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..=4),
        scale in 0.01f64..100.0,
        shift in -10.0f64..10.0,
    ) {
        let marginal: Vec<usize> = scores.iter().map(|s| argmax_choice(s)).collect();
        prop_assert_eq!(joint_argmax_bruteforce(&scores), marginal.clone());
        let moved: Vec<usize> = scores
            .iter()
            .map(|s| argmax_choice(&s.iter().map(|v| scale * v + shift).collect::<Vec<_>>()))
            .collect();
        prop_assert_eq!(moved, marginal);
    }

    #[test]
    fn logit_scores_pick_the_likelier_choice(p in 0.001f64..0.999) {
        let choice = argmax_choice(&choice_scores(&[1.0 - p, p]));
        prop_assert_eq!(choice, usize::from(p > 0.5));
    }

    #[test]
    fn softmax_and_sigmoid_are_distributions(v in prop::collection::vec(-700.0f64..700.0, 1..10), z in -800.0f64..800.0) {
        let p = softmax(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let s = sigmoid(z);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s + sigmoid(-z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kfold_partitions_every_row(n in 2usize..300, k in 2usize..10, seed: u64) {
        prop_assume!(k <= n);
        let plan = kfold_split(n, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);
        let all: BTreeSet<usize> = plan.folds.iter().flatten().copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(plan.n(), n);
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(kfold_split(n, k, seed).unwrap(), plan);
    }

    #[test]
    fn smote_keeps_originals_and_hits_target(
        n_major in 40usize..200,
        n_minor in 6usize..40,
        ratio in 0.2f64..=1.0,
        seed: u64,
    ) {
        let n = n_major + n_minor;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 31 + j * 17) % 97) as f64 / 10.0);
        let y: Vec<u8> = (0..n).map(|i| u8::from(i >= n_major)).collect();
        let cfg = BalanceConfig { k_neighbors: 5, target_ratio: ratio, seed };
        let (xb, yb) = balance_dataset(&x, &y, &cfg).unwrap();
        prop_assert_eq!(xb.slice(ndarray::s![..n, ..]), x.view());
        prop_assert_eq!(&yb[..n], &y[..]);
        let pos = yb.iter().filter(|&&v| v == 1).count();
        let target = (ratio * n_major as f64).round() as usize;
        prop_assert_eq!(pos, target.max(n_minor));
    }

    #[test]
    fn mrmr_returns_distinct_features(rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 20..80), k in 1usize..=5) {
        let n = rows.len();
        let x = Array2::from_shape_fn((n, 5), |(i, j)| rows[i][j]);
        let y: Vec<u8> = (0..n).map(|i| u8::from(rows[i][0] + rows[i][1] > 0.0)).collect();
        let names: Vec<String> = (0..5).map(|j| format!("f{j}")).collect();
        let sel = mrmr_select(&discretize(&x, &names, 4), &y, k).unwrap();
        prop_assert_eq!(sel.indices.len(), k);
        prop_assert_eq!(sel.indices.iter().collect::<BTreeSet<_>>().len(), k);
        for (name, &i) in sel.names.iter().zip(&sel.indices) {
            prop_assert_eq!(name, &names[i]);
        }
    }

    #[test]
    fn standardized_columns_have_zero_mean(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 3..50)) {
        let n = rows.len();
        let x = Array2::from_shape_fn((n, 3), |(i, j)| rows[i][j]);
        let st = StandardizationStats::fit(&x).unwrap();
        let z = st.apply(&x).unwrap();
        for j in 0..3 {
            if !st.is_pass_through(j) {
                prop_assert!(z.column(j).mean().unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ttest_is_antisymmetric(
        a in prop::collection::vec(-100.0f64..100.0, 2..20),
        b in prop::collection::vec(-100.0f64..100.0, 2..20),
        welch: bool,
    ) {
        let variant = if welch { TTestVariant::Welch } else { TTestVariant::Pooled };
        if let (Ok(ab), Ok(ba)) = (two_sample_ttest(&a, &b, variant), two_sample_ttest(&b, &a, variant)) {
            prop_assert!((ab.t + ba.t).abs() <= 1e-9 * ab.t.abs().max(1.0));
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }

    #[test]
    fn savings_and_rounding(before in 1.0f64..1440.0, after in 0.0f64..1440.0, x in -1e4f64..1e4) {
        prop_assert_eq!(savings_delta(before, before).unwrap(), 0.0);
        prop_assert!(savings_delta(before, after).unwrap() <= 100.0);
        let r = round_half_up(x, 1);
        prop_assert_eq!(round_half_up(r, 1), r);
        prop_assert!((r - x).abs() <= 0.05 + 1e-9);
        prop_assert_eq!(round_half_up(-x, 1), -r);
    }

    #[test]
    fn derived_seeds_are_stable_and_separate(root: u64, a in "[a-z/]{1,12}", b in "[a-z/]{1,12}") {
        prop_assert_eq!(derive_seed(root, &a), derive_seed(root, &a));
        if a != b {
            prop_assert_ne!(derive_seed(root, &a), derive_seed(root, &b));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dataset_csv_round_trips(seed: u64, threshold in 25.0f64..31.0) {
        let ds = synth_generate(&SynthConfig::new(1, 1, PlantedSignal::WeatherOnly { threshold }, seed)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = parse_dataset_reader(buf.as_slice()).unwrap();
        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
        prop_assert_eq!(back.len(), ds.len());
    }
}
