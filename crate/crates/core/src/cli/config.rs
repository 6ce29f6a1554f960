//! TOML experiment configuration. The grammar is documented in
//! `docs/config.md`; unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::data::{Calendar, Dataset, PlantedSignal, ResourceKind, Scenario, SynthConfig};
use crate::evaluation::{DateRange, DateSplit, ExperimentSettings, ModelKind};
use crate::game_sim::ChoiceMode;
use crate::generative::{RVAEConfig, VAEConfig};
use crate::points::PointsConfig;
use crate::stats::TTestVariant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root seed; every task seed derives from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// `name,start_date,end_date` lines; no file means no college dummies.
    pub calendar: Option<PathBuf>,
    pub data: DataSection,
    pub split: Option<DateSplit>,
    pub scenario: Scenario,
    pub resources: Vec<ResourceKind>,
    pub models: Vec<ModelKind>,
    pub experiment: ExperimentSettings,
    pub select: SelectSection,
    pub balance: BalanceSection,
    pub game: GameSection,
    pub generate: GenerateSection,
    pub stats: StatsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            calendar: None,
            data: DataSection::default(),
            split: None,
            scenario: Scenario::StepAhead,
            resources: ResourceKind::ALL.to_vec(),
            models: vec![ModelKind::Logistic],
            experiment: ExperimentSettings::default(),
            select: SelectSection::default(),
            balance: BalanceSection::default(),
            game: GameSection::default(),
            generate: GenerateSection::default(),
            stats: StatsSection::default(),
        }
    }
}

/// Exactly one of `path` or `synth` for commands that read data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    /// Restrict selection to one occupant; all occupants by default.
    pub occupant: Option<String>,
    /// Label resource; the first configured resource by default.
    pub resource: Option<ResourceKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceSection {
    pub k_neighbors: usize,
    pub target_ratio: f64,
}

impl Default for BalanceSection {
    fn default() -> Self {
        BalanceSection { k_neighbors: 5, target_ratio: 1.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    /// Pre-game dates for baselines.
    pub baseline: Option<DateRange>,
    /// Dates replayed as the exogenous feature stream.
    pub stream: Option<DateRange>,
    /// Minutes per agent; the shortest agent stream by default.
    pub horizon: Option<usize>,
    pub mode: ChoiceMode,
    pub points: PointsConfig,
    /// Profiles written by `train`; fitted afresh when absent.
    pub profiles: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerativeKind {
    Vae,
    RecurrentVae,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    /// First occupant id by default.
    pub occupant: Option<String>,
    pub model: GenerativeKind,
    pub vae: VAEConfig,
    pub rvae: RVAEConfig,
    /// Recurrent VAE window length and stride.
    pub window_len: usize,
    /// Minutes averaged into one point of the DTW validation series.
    pub resample_minutes: usize,
    pub n_perm: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection {
            occupant: None,
            model: GenerativeKind::Both,
            vae: VAEConfig::default(),
            rvae: RVAEConfig::default(),
            window_len: 16,
            resample_minutes: 60,
            n_perm: 99,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub before: Option<DateRange>,
    pub after: Option<DateRange>,
    pub variant: TTestVariant,
    /// `respondent_id,item_id,value,reverse_coded` CSV.
    pub survey: Option<PathBuf>,
    /// Bucket name to the item ids scored together.
    pub buckets: BTreeMap<String, Vec<String>>,
}

fn usage(m: impl Into<String>) -> CliError {
    CliError::Usage(m.into())
}

impl ExperimentConfig {
    /// Parses TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for p in [&mut self.calendar, &mut self.data.path, &mut self.game.profiles, &mut self.stats.survey]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.path.is_some() && self.data.synth.is_some() {
            return Err(usage("data: give either `path` or `synth`, not both"));
        }
        if let Some(s) = &self.data.synth {
            s.validate().map_err(|e| usage(format!("data.synth: {e}")))?;
        }
        if self.resources.is_empty() {
            return Err(usage("resources must not be empty"));
        }
        self.experiment.validate().map_err(|e| usage(format!("experiment: {e}")))?;
        self.game.points.validate().map_err(|e| usage(format!("game.points: {e}")))?;
        for (name, r) in [("game.baseline", self.game.baseline), ("game.stream", self.game.stream)] {
            if let Some(r) = r {
                if r.start > r.end {
                    return Err(usage(format!("{name} starts after it ends")));
                }
            }
        }
        let g = &self.generate;
        if g.window_len == 0 || g.resample_minutes == 0 {
            return Err(usage("generate: window_len and resample_minutes must be positive"));
        }
        if g.n_perm < 99 {
            return Err(usage("generate.n_perm must be at least 99"));
        }
        if !(self.balance.k_neighbors > 0 && self.balance.target_ratio > 0.0 && self.balance.target_ratio <= 1.0) {
            return Err(usage("balance: k_neighbors ≥ 1 and target_ratio in (0, 1]"));
        }
        Ok(())
    }

    pub fn split(&self) -> Result<DateSplit, CliError> {
        self.split.ok_or_else(|| usage("this command needs a [split] section"))
    }

    pub fn calendar(&self) -> Result<Calendar, CliError> {
        match &self.calendar {
            Some(p) => Calendar::load(p).map_err(CliError::data),
            None => Ok(Calendar::default()),
        }
    }

    /// Synthetic settings when the config names none.
    pub fn default_synth() -> SynthConfig {
        SynthConfig::new(2, 10, PlantedSignal::WeatherOnly { threshold: 28.0 }, 0)
    }

    /// The configured dataset: read from `data.path` or generated from
    /// `data.synth` with the derived synth seed.
    pub fn dataset(&self, root_seed: u64) -> Result<Dataset, CliError> {
        match (&self.data.path, &self.data.synth) {
            (Some(p), None) => crate::data::parse_dataset(p).map_err(CliError::data),
            (None, Some(s)) => synth_with_seed(s, root_seed),
            _ => Err(usage("this command needs [data] with `path` or `synth`")),
        }
    }
}

pub fn synth_with_seed(s: &SynthConfig, root_seed: u64) -> Result<Dataset, CliError> {
    let mut s = s.clone();
    s.seed = crate::seed::derive_seed(root_seed, "synth");
    crate::data::synth_generate(&s).map_err(CliError::data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c = ExperimentConfig::from_toml("", Path::new("/base")).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("/base/out"));
        assert_eq!(c.resources.len(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected_at_any_depth() {
        for text in ["bogus = 1", "[experiment]\ntop_kk = 3", "[game.points]\nboost = [1.0]", "[data.synth]\noccupants = 1\ndays = 2\nextra = 0\n[data.synth.planted_signal]\nkind = \"weather_only\"\nthreshold = 1.0"] {
            assert!(matches!(ExperimentConfig::from_toml(text, Path::new(".")), Err(CliError::Usage(_))), "{text}");
        }
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
seed = 7
output_dir = "results"
scenario = "sensor-free"
resources = ["ceiling_fan", "desk_light"]
models = ["logistic", "lda"]

[data.synth]
occupants = 1
days = 9
planted_signal = { kind = "weather_only", threshold = 28.0 }

[split]
train = { start = "2017-09-12", end = "2017-09-17" }
test = { start = "2017-09-18", end = "2017-09-20" }

[experiment]
top_k = 10
search_budget = 4
cv_folds = 3

[experiment.search.logistic]
lambda = { low = 1e-4, high = 1.0, log = true }

[experiment.models.logistic]
max_iter = 300

[game]
baseline = { start = "2017-09-12", end = "2017-09-18" }
mode = "sample"

[stats.buckets]
light = ["l1", "l2"]
"#;
        let c = ExperimentConfig::from_toml(text, Path::new("/x")).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.scenario, Scenario::SensorFree);
        assert_eq!(c.models, vec![ModelKind::Logistic, ModelKind::Lda]);
        assert_eq!(c.experiment.search_budget, 4);
        assert_eq!(c.game.mode, ChoiceMode::Sample);
        assert_eq!(c.stats.buckets["light"].len(), 2);
        assert_eq!(c.output_dir, PathBuf::from("/x/results"));
    }

    #[test]
    fn documented_examples_parse() {
        let text = r#"
resources = ["ac", "air_con", "desk_light"]
models = ["bi_rnn", "random_forest"]

[data.synth]
occupants = 1
days = 3
planted_signal = { kind = "memoryless", channel = "ext_humidity_pct", threshold = 70.0 }

[experiment.search.random_forest]
max_depth = { low = 2, high = 12, integer = true }
n_trees = [50, 100, 200]

[experiment.models.logistic]
max_iter = 500
penalty = { kind = "l2", lambda = 1e-4 }

[experiment.models.birnn]
n_layers = 1
hidden_size = 8
window = 4
batch_size = 64
input_transform = "tanh_standard"

[game.points]
booster = [100.0, 100.0, 50.0, 150.0]

[stats]
variant = "welch"
"#;
        let c = ExperimentConfig::from_toml(text, Path::new(".")).unwrap();
        assert_eq!(c.resources[0], ResourceKind::AirCon);
        assert_eq!(c.experiment.models.birnn.window, 4);
        assert_eq!(c.stats.variant, TTestVariant::Welch);
    }

    #[test]
    fn conflicting_sources_are_usage_errors() {
        let text = "[data]\npath = \"a.csv\"\n[data.synth]\noccupants = 1\ndays = 2\nplanted_signal = { kind = \"weather_only\", threshold = 1.0 }";
        assert!(matches!(ExperimentConfig::from_toml(text, Path::new(".")), Err(CliError::Usage(_))));
    }
}
