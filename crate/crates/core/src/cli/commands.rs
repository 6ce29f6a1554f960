use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use ndarray::{Array2, Axis};

use super::{CliError, ExperimentConfig, GenerativeKind};
use crate::data::{
    pool_features, scenario_filter, write_dataset, DataError, Dataset, EnvChannel, FeatureMatrix, ResourceKind,
    Scenario, WindowedTensor, TIMESTAMP_FORMAT,
};
use crate::evaluation::{run_scenario_experiment, EvalError, ExperimentError, ExperimentSettings};
use crate::game_sim::{fit_agent_profiles, simulate_game, AgentFitConfig, AgentProfile, GameError, SimulationConfig};
use crate::generative::{
    dtw_distance, permutation_test_dtw, rvae_generate, rvae_train, vae_generate, vae_train, GenError,
};
use crate::points::compute_baselines;
use crate::prep::{balance_dataset, discretize, mrmr_select, BalanceConfig, PrepError, SelectionResult};
use crate::seed::derive_seed;
use crate::stats::{cronbach_alpha, savings_table, LikertSurvey};

pub(super) struct Ctx {
    pub cfg: ExperimentConfig,
    pub root_seed: u64,
}

impl Ctx {
    fn seed(&self, task: &str) -> u64 {
        derive_seed(self.root_seed, task)
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        self.cfg.dataset(self.root_seed)
    }

    fn settings(&self) -> ExperimentSettings {
        ExperimentSettings { seed: self.seed("experiment"), ..self.cfg.experiment.clone() }
    }

    fn resource(&self, flag: Option<ResourceKind>) -> ResourceKind {
        flag.or(self.cfg.select.resource).unwrap_or(self.cfg.resources[0])
    }

    /// Writes `name` under the output directory through `body`.
    fn write<F>(&self, name: &str, body: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.cfg.output_dir.join(name);
        let file = File::create(&path).map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush().map_err(CliError::data)?;
        info!("wrote {}", path.display());
        Ok(path)
    }
}

fn data_err(e: DataError) -> CliError {
    match e {
        DataError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::data(other),
    }
}

fn exp_err(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Eval(EvalError::InvalidConfig(m) | EvalError::InvalidSplit(m)) => CliError::Usage(m),
        ExperimentError::Data(d) => data_err(d),
        ExperimentError::Prep(PrepError::InvalidConfig(m)) => CliError::Usage(m),
        other => CliError::data(other),
    }
}

fn game_err(e: GameError) -> CliError {
    match e {
        GameError::Experiment(x) => exp_err(x),
        GameError::Data(d) => data_err(d),
        other => CliError::data(other),
    }
}

fn gen_err(e: GenError) -> CliError {
    match e {
        GenError::InvalidConfig(m) => CliError::Usage(m),
        other => CliError::data(other),
    }
}

pub(super) fn ingest(ctx: &Ctx, input: Option<PathBuf>) -> Result<(), CliError> {
    let path = input
        .or_else(|| ctx.cfg.data.path.clone())
        .ok_or_else(|| CliError::Usage("ingest needs --input or data.path".into()))?;
    let ds = crate::data::parse_dataset(&path).map_err(CliError::data)?;
    info!("{}: {} records, {} occupants, {} gaps", path.display(), ds.len(), ds.spans().len(), ds.gaps().len());
    ctx.write("dataset.csv", |w| write_dataset(&ds, w).map_err(CliError::data))?;
    Ok(())
}

pub(super) fn synth(ctx: &Ctx) -> Result<(), CliError> {
    let s = ctx.cfg.data.synth.clone().unwrap_or_else(ExperimentConfig::default_synth);
    let ds = super::config::synth_with_seed(&s, ctx.root_seed)?;
    ctx.write("synth.csv", |w| write_dataset(&ds, w).map_err(CliError::data))?;
    Ok(())
}

fn write_features<W: Write>(fm: &FeatureMatrix, w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string(), "occupant_id".to_string()];
    header.extend(fm.names());
    header.extend(ResourceKind::ALL.iter().map(|r| format!("label_{r}")));
    out.write_record(&header).map_err(CliError::data)?;
    for i in 0..fm.n_rows() {
        let mut rec = vec![
            fm.row_timestamps[i].format(TIMESTAMP_FORMAT).to_string(),
            fm.occupant_ids[fm.row_occupants[i]].clone(),
        ];
        rec.extend(fm.rows.row(i).iter().map(|v| v.to_string()));
        rec.extend(ResourceKind::ALL.iter().map(|&r| fm.labels(r)[i].to_string()));
        out.write_record(&rec).map_err(CliError::data)?;
    }
    out.flush().map_err(CliError::data)
}

fn pooled(ctx: &Ctx, scenario: Scenario) -> Result<FeatureMatrix, CliError> {
    let ds = ctx.dataset()?;
    let fm = pool_features(&ds, &ctx.cfg.calendar()?).map_err(data_err)?;
    scenario_filter(&fm, scenario).map_err(data_err)
}

pub(super) fn featurize(ctx: &Ctx, scenario: Option<Scenario>) -> Result<(), CliError> {
    let scenario = scenario.unwrap_or(ctx.cfg.scenario);
    let fm = pooled(ctx, scenario)?;
    ctx.write(&format!("features_{scenario}.csv"), |w| write_features(&fm, w))?;
    Ok(())
}

/// Training rows (the split's training dates, or everything) of the chosen
/// occupant, or all occupants.
fn training_rows(ctx: &Ctx, fm: &FeatureMatrix, occupant: &Option<String>) -> Result<Vec<usize>, CliError> {
    let mut rows: Vec<usize> = match ctx.cfg.split {
        Some(s) => fm.rows_between(s.train.start, s.train.end),
        None => (0..fm.n_rows()).collect(),
    };
    if let Some(o) = occupant {
        if !fm.occupant_ids.contains(o) {
            return Err(CliError::Usage(format!("unknown occupant `{o}`")));
        }
        let mine: std::collections::BTreeSet<usize> = fm.rows_of_occupant(o).into_iter().collect();
        rows.retain(|r| mine.contains(r));
    }
    if rows.is_empty() {
        return Err(CliError::Data("no training rows".into()));
    }
    Ok(rows)
}

fn run_selection(
    ctx: &Ctx,
    scenario: Option<Scenario>,
    resource: ResourceKind,
    occupant: &Option<String>,
) -> Result<(FeatureMatrix, SelectionResult), CliError> {
    let fm = pooled(ctx, scenario.unwrap_or(ctx.cfg.scenario))?;
    let occupant = occupant.clone().or_else(|| ctx.cfg.select.occupant.clone());
    let train = fm.select_rows(&training_rows(ctx, &fm, &occupant)?);
    let dm = discretize(&train.rows, &train.names(), ctx.cfg.experiment.mrmr_bins);
    let k = ctx.cfg.experiment.top_k.min(train.n_features());
    let sel = mrmr_select(&dm, train.labels(resource), k).map_err(CliError::data)?;
    Ok((train, sel))
}

pub(super) fn select(
    ctx: &Ctx,
    scenario: Option<Scenario>,
    resource: Option<ResourceKind>,
    occupant: Option<String>,
) -> Result<(), CliError> {
    let resource = ctx.resource(resource);
    let (_, sel) = run_selection(ctx, scenario, resource, &occupant)?;
    ctx.write(&format!("selection_{resource}.csv"), |w| sel.write_csv(w).map_err(CliError::data))?;
    Ok(())
}

pub(super) fn balance(
    ctx: &Ctx,
    scenario: Option<Scenario>,
    resource: Option<ResourceKind>,
    occupant: Option<String>,
) -> Result<(), CliError> {
    let resource = ctx.resource(resource);
    let (train, sel) = run_selection(ctx, scenario, resource, &occupant)?;
    let x = train.rows.select(Axis(1), &sel.indices);
    let cfg = BalanceConfig {
        k_neighbors: ctx.cfg.balance.k_neighbors,
        target_ratio: ctx.cfg.balance.target_ratio,
        seed: ctx.seed("balance"),
    };
    let (xb, yb) = balance_dataset(&x, train.labels(resource), &cfg).map_err(CliError::data)?;
    info!("balanced {} rows to {}", x.nrows(), xb.nrows());
    ctx.write(&format!("balanced_{resource}.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = sel.names.clone();
        header.push("label".into());
        out.write_record(&header).map_err(CliError::data)?;
        for (row, y) in xb.rows().into_iter().zip(&yb) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            out.write_record(&rec).map_err(CliError::data)?;
        }
        out.flush().map_err(CliError::data)
    })?;
    Ok(())
}

fn fit_config(ctx: &Ctx, scenario: Option<Scenario>) -> Result<AgentFitConfig, CliError> {
    Ok(AgentFitConfig {
        split: ctx.cfg.split()?,
        scenario: scenario.unwrap_or(ctx.cfg.scenario),
        resources: ctx.cfg.resources.clone(),
        roster: ctx.cfg.models.clone(),
        settings: ctx.settings(),
    })
}

pub(super) fn train(ctx: &Ctx, scenario: Option<Scenario>) -> Result<(), CliError> {
    let ds = ctx.dataset()?;
    let profiles = fit_agent_profiles(&ds, &ctx.cfg.calendar()?, &fit_config(ctx, scenario)?).map_err(game_err)?;
    ctx.write("profiles.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &profiles).map_err(CliError::data)?;
        writeln!(w).map_err(CliError::data)
    })?;
    ctx.write("profiles_summary.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["occupant", "resource", "model", "status"]).map_err(CliError::data)?;
        for p in &profiles {
            for r in ResourceKind::ALL {
                let (model, status) = match (p.utility(r), p.absent.get(&r)) {
                    (Some(u), _) => (u.pipeline.kind.to_string(), "ok".to_string()),
                    (None, reason) => (String::new(), format!("absent: {}", reason.map_or("", String::as_str))),
                };
                out.write_record([p.occupant_id.clone(), r.to_string(), model, status]).map_err(CliError::data)?;
            }
        }
        out.flush().map_err(CliError::data)
    })?;
    Ok(())
}

pub(super) fn evaluate(ctx: &Ctx, scenario: Option<Scenario>) -> Result<(), CliError> {
    let scenario = scenario.unwrap_or(ctx.cfg.scenario);
    let ds = ctx.dataset()?;
    let table = run_scenario_experiment(
        &ds,
        &ctx.cfg.calendar()?,
        &ctx.cfg.split()?,
        scenario,
        &ctx.cfg.resources,
        &ctx.cfg.models,
        &ctx.settings(),
    )
    .map_err(exp_err)?;
    ctx.write(&format!("results_{scenario}.csv"), |w| table.write_csv(w).map_err(CliError::data))?;
    ctx.write(&format!("report_{scenario}.txt"), |w| w.write_all(table.to_text().as_bytes()).map_err(CliError::data))?;
    ctx.write(&format!("report_{scenario}.html"), |w| w.write_all(table.to_html().as_bytes()).map_err(CliError::data))?;
    Ok(())
}

fn load_profiles(path: &Path) -> Result<Vec<AgentProfile>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub(super) fn simulate(ctx: &Ctx, profiles: Option<PathBuf>, horizon: Option<usize>) -> Result<(), CliError> {
    let game = &ctx.cfg.game;
    let baseline = game.baseline.ok_or_else(|| CliError::Usage("simulate needs game.baseline".into()))?;
    let stream_dates = game.stream.ok_or_else(|| CliError::Usage("simulate needs game.stream".into()))?;
    let ds = ctx.dataset()?;
    let calendar = ctx.cfg.calendar()?;
    let agents = match profiles.or_else(|| game.profiles.clone()) {
        Some(p) => load_profiles(&p)?,
        None => fit_agent_profiles(&ds, &calendar, &fit_config(ctx, None)?).map_err(game_err)?,
    };
    let baselines = compute_baselines(&ds.filter_dates(baseline.start, baseline.end)).map_err(CliError::data)?;
    let stream = ds.filter_dates(stream_dates.start, stream_dates.end);
    let horizon = match horizon.or(game.horizon) {
        Some(h) => h,
        None => agents
            .iter()
            .map(|a| stream.occupant_records(&a.occupant_id).map_or(0, <[_]>::len))
            .min()
            .unwrap_or(0),
    };
    let sim = SimulationConfig { horizon, mode: game.mode, points: game.points.clone(), seed: ctx.seed("simulate") };
    let trace = simulate_game(&agents, &stream, &calendar, &baselines, &sim).map_err(game_err)?;
    ctx.write("trace.csv", |w| trace.write_csv(w).map_err(CliError::data))?;
    ctx.write("points.csv", |w| trace.write_points_csv(w).map_err(CliError::data))?;
    Ok(())
}

/// Status and weather channels of one occupant's valid pooled rows, with
/// the row indices where a minute gap starts a new segment.
fn trace_channels(fm: &FeatureMatrix, occupant: &str) -> Result<(Vec<String>, Array2<f64>, Vec<usize>), CliError> {
    let rows = fm.rows_of_occupant(occupant);
    if rows.is_empty() {
        return Err(CliError::Usage(format!("unknown occupant `{occupant}`")));
    }
    let mut names: Vec<String> = ResourceKind::ALL.iter().map(|r| format!("{r}_status")).collect();
    let env_cols: Vec<usize> = EnvChannel::ALL
        .iter()
        .map(|c| fm.column_index(c.column()).ok_or_else(|| CliError::data(format!("missing column {}", c.column()))))
        .collect::<Result<_, _>>()?;
    names.extend(EnvChannel::ALL.iter().map(|c| c.column().to_string()));
    let mut x = Array2::zeros((rows.len(), names.len()));
    let mut breaks = vec![0];
    for (i, &r) in rows.iter().enumerate() {
        for res in ResourceKind::ALL {
            x[[i, res.index()]] = f64::from(fm.labels(res)[r]);
        }
        for (j, &c) in env_cols.iter().enumerate() {
            x[[i, 4 + j]] = fm.rows[[r, c]];
        }
        if i > 0 && (fm.row_timestamps[r] - fm.row_timestamps[rows[i - 1]]).num_minutes() != 1 {
            breaks.push(i);
        }
    }
    Ok((names, x, breaks))
}

/// Non-overlapping windows inside contiguous segments.
fn segment_windows(x: &Array2<f64>, breaks: &[usize], len: usize) -> WindowedTensor {
    let n = x.nrows();
    let mut ends = Vec::new();
    for (k, &start) in breaks.iter().enumerate() {
        let stop = breaks.get(k + 1).copied().unwrap_or(n);
        let mut e = start + len - 1;
        while e < stop {
            ends.push(e);
            e += len;
        }
    }
    let labels = vec![0; ends.len()];
    WindowedTensor::from_parts(x.clone(), ends, labels, len, len)
}

/// Block means of one column.
fn resample(x: &Array2<f64>, col: usize, block: usize) -> Vec<f64> {
    x.column(col)
        .to_vec()
        .chunks(block)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

pub(super) fn generate(ctx: &Ctx, occupant: Option<String>) -> Result<(), CliError> {
    let g = &ctx.cfg.generate;
    let ds = ctx.dataset()?;
    let fm = pool_features(&ds, &ctx.cfg.calendar()?).map_err(data_err)?;
    let occupant = match occupant.or_else(|| g.occupant.clone()) {
        Some(o) => o,
        None => fm.occupant_ids.iter().min().cloned().ok_or_else(|| CliError::Data("dataset has no occupants".into()))?,
    };
    let (names, x, breaks) = trace_channels(&fm, &occupant)?;
    let n = x.nrows();
    let kinds: Vec<GenerativeKind> = match g.model {
        GenerativeKind::Both => vec![GenerativeKind::Vae, GenerativeKind::RecurrentVae],
        k => vec![k],
    };
    let mut dtw_rows: Vec<[String; 4]> = Vec::new();
    for kind in kinds {
        let (tag, samples) = match kind {
            GenerativeKind::Vae => {
                let cfg = crate::generative::VAEConfig { seed: ctx.seed("generate/vae"), ..g.vae.clone() };
                let (m, _) = vae_train(&x, &cfg).map_err(gen_err)?;
                ("vae", vae_generate(&m, n, ctx.seed("generate/vae/sample")))
            }
            _ => {
                let cfg = crate::generative::RVAEConfig { seed: ctx.seed("generate/rvae"), ..g.rvae.clone() };
                let wt = segment_windows(&x, &breaks, g.window_len);
                let (m, _) = rvae_train(&wt, &cfg).map_err(gen_err)?;
                ("recurrent_vae", rvae_generate(&m, n, ctx.seed("generate/rvae/sample")).map_err(gen_err)?)
            }
        };
        ctx.write(&format!("generated_{tag}.csv"), |w| {
            let mut out = csv::Writer::from_writer(w);
            let mut header = vec!["step".to_string()];
            header.extend(names.iter().cloned());
            out.write_record(&header).map_err(CliError::data)?;
            for (i, row) in samples.rows().into_iter().enumerate() {
                let mut rec = vec![i.to_string()];
                rec.extend(row.iter().map(|v| v.to_string()));
                out.write_record(&rec).map_err(CliError::data)?;
            }
            out.flush().map_err(CliError::data)
        })?;
        let block = g.resample_minutes;
        let segment = (1440 / block).max(1);
        for r in ResourceKind::ALL {
            let a = resample(&x, r.index(), block);
            let b = resample(&samples, r.index(), block);
            let d = dtw_distance(&a, &b).map_err(gen_err)?;
            let seed = ctx.seed(&format!("generate/perm/{tag}/{r}"));
            let p = permutation_test_dtw(&a, &b, g.n_perm, segment, seed).map_err(gen_err)?;
            dtw_rows.push([tag.to_string(), r.to_string(), d.score.to_string(), p.p_value.to_string()]);
        }
    }
    ctx.write("dtw.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "channel", "dtw", "p_value"]).map_err(CliError::data)?;
        for r in &dtw_rows {
            out.write_record(r).map_err(CliError::data)?;
        }
        out.flush().map_err(CliError::data)
    })?;
    Ok(())
}

pub(super) fn stats(ctx: &Ctx, survey: Option<PathBuf>) -> Result<(), CliError> {
    let s = &ctx.cfg.stats;
    let survey = survey.or_else(|| s.survey.clone());
    let mut did = false;
    if let (Some(before), Some(after)) = (s.before, s.after) {
        let ds = ctx.dataset()?;
        let report = savings_table(
            &ds.filter_dates(before.start, before.end),
            &ds.filter_dates(after.start, after.end),
            s.variant,
        )
        .map_err(CliError::data)?;
        ctx.write("savings.csv", |w| report.write_savings_csv(w).map_err(CliError::data))?;
        ctx.write("weekday_weekend.csv", |w| report.write_period_csv(w).map_err(CliError::data))?;
        did = true;
    }
    if let Some(path) = survey {
        if s.buckets.is_empty() {
            return Err(CliError::Usage("survey analysis needs [stats.buckets]".into()));
        }
        let sv = LikertSurvey::load(&path).map_err(CliError::data)?;
        let mut rows = Vec::new();
        for (bucket, items) in &s.buckets {
            let refs: Vec<&str> = items.iter().map(String::as_str).collect();
            let r = cronbach_alpha(&sv, &refs).map_err(CliError::data)?;
            rows.push([bucket.clone(), items.join(" "), r.alpha.to_string(), r.n_items.to_string()]);
        }
        ctx.write("cronbach.csv", |w| {
            let mut out = csv::Writer::from_writer(w);
            out.write_record(["bucket", "items", "alpha", "n_items"]).map_err(CliError::data)?;
            for r in &rows {
                out.write_record(r).map_err(CliError::data)?;
            }
            out.flush().map_err(CliError::data)
        })?;
        did = true;
    }
    if !did {
        return Err(CliError::Usage("stats needs stats.before and stats.after, or a survey".into()));
    }
    Ok(())
}
