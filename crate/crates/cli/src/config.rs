//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use cssi_core::dynamics::DynamicsConfig;
use cssi_core::eval::GridSpec;
use cssi_core::ncd::NcdHyper;
use cssi_core::synth::{build_config, make_example};
use cssi_core::{ExampleKind, LabeledDataset, Scm, SynthConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{LabError, LabResult};

const DEFAULT_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

fn invalid(key: &str, reason: impl Into<String>) -> LabError {
    cssi_core::Error::invalid_config(key, reason).into()
}

fn parse_block<T: DeserializeOwned>(key: &str, v: Value) -> LabResult<T> {
    serde_json::from_value(v).map_err(|e| invalid(key, e.to_string()))
}

/// Where the rows come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Example { example: ExampleKind, n_samples: usize, seed: u64, split: [f64; 3] },
    Synth(SynthConfig),
    Dynamics { config: DynamicsConfig, split: [f64; 3] },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleBlock {
    example: String,
    #[serde(default = "default_n_samples")]
    n_samples: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_split")]
    split: [f64; 3],
}

fn default_n_samples() -> usize {
    50_000
}

fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}

impl DatasetSpec {
    /// `{"source": "example" | "synth" | "dynamics", ...}`.
    pub fn from_value(v: &Value) -> LabResult<Self> {
        let Value::Object(map) = v else {
            return Err(invalid("dataset", "expected an object"));
        };
        let mut rest = map.clone();
        let source = rest.remove("source").ok_or_else(|| invalid("dataset.source", "missing"))?;
        match source.as_str() {
            Some("example") => {
                let b: ExampleBlock = parse_block("dataset", Value::Object(rest))?;
                let example = ExampleKind::parse(&b.example)?;
                if b.n_samples == 0 {
                    return Err(invalid("n_samples", "must be positive"));
                }
                Ok(DatasetSpec::Example { example, n_samples: b.n_samples, seed: b.seed, split: b.split })
            }
            Some("synth") => Ok(DatasetSpec::Synth(SynthConfig::from_value(&Value::Object(rest))?)),
            Some("dynamics") => {
                let split = match rest.remove("split") {
                    Some(s) => parse_block("split", s)?,
                    None => DEFAULT_SPLIT,
                };
                let config: DynamicsConfig = parse_block("dataset", Value::Object(rest))?;
                config.validate()?;
                Ok(DatasetSpec::Dynamics { config, split })
            }
            _ => Err(invalid("dataset.source", format!("unknown source {source}, expected example, synth or dynamics"))),
        }
    }

    pub fn split_ratios(&self) -> [f64; 3] {
        match self {
            DatasetSpec::Example { split, .. } | DatasetSpec::Dynamics { split, .. } => *split,
            DatasetSpec::Synth(c) => c.split,
        }
    }

    /// The generating system, when it has a closed-form decomposition.
    pub fn scm(&self) -> LabResult<Option<Scm>> {
        Ok(match self {
            DatasetSpec::Example { example, .. } => Some(make_example(*example)),
            DatasetSpec::Synth(c) => Some(build_config(c)?),
            DatasetSpec::Dynamics { .. } => None,
        })
    }

    /// Draw the full, unsplit dataset.
    pub fn generate(&self) -> LabResult<LabeledDataset> {
        Ok(match self {
            DatasetSpec::Example { example, n_samples, seed, .. } => make_example(*example).sample(*n_samples, *seed)?,
            DatasetSpec::Synth(c) => cssi_core::synth::generate(c)?.1,
            DatasetSpec::Dynamics { config, .. } => cssi_core::dynamics::rollout(config)?,
        })
    }
}

/// Which scores `eval` feeds to the ROC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    /// Gate probabilities of the trained model.
    #[default]
    Model,
    /// The ground-truth masks themselves (a harness check).
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryBlock {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub plane: (usize, usize),
    /// Values of the coordinates off the plane; zeros when absent.
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    #[serde(default)]
    pub epochs: Vec<usize>,
}

fn default_resolution() -> usize {
    100
}

impl BoundaryBlock {
    pub fn grid_spec(&self, dim: usize) -> LabResult<GridSpec> {
        let base = self.base.clone().unwrap_or_else(|| vec![0.0; dim]);
        if base.len() != dim {
            return Err(invalid("eval.boundary.base", format!("{} values for {dim} coordinates", base.len())));
        }
        let spec = GridSpec { x_range: self.x_range, y_range: self.y_range, resolution: self.resolution, plane: self.plane, base };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    /// Thresholds at which pooled confusion counts are reported.
    pub thresholds: Vec<f64>,
    /// Target variables to model; all of them when absent.
    pub targets: Option<Vec<usize>>,
    /// Save a checkpoint every this many epochs (0: final only).
    pub checkpoint_every: usize,
    pub scores: ScoreSource,
    pub boundary: Option<BoundaryBlock>,
    pub out_dir: Option<PathBuf>,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { thresholds: vec![0.5], targets: None, checkpoint_every: 0, scores: ScoreSource::Model, boundary: None, out_dir: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: NcdHyper,
    pub eval: EvalBlock,
    pub seeds: Vec<u64>,
}

const TOP_KEYS: [&str; 5] = ["name", "dataset", "model", "eval", "seeds"];

impl ExperimentConfig {
    pub fn from_value(v: &Value) -> LabResult<Self> {
        let Value::Object(map) = v else {
            return Err(invalid("config", "expected a JSON object"));
        };
        if let Some(k) = map.keys().find(|k| !TOP_KEYS.contains(&k.as_str())) {
            return Err(invalid(k, "unknown key"));
        }
        let name = match map.get("name") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            None => "experiment".into(),
            Some(other) => return Err(invalid("name", format!("expected a non-empty string, got {other}"))),
        };
        let dataset = DatasetSpec::from_value(map.get("dataset").ok_or_else(|| invalid("dataset", "missing"))?)?;
        let model: NcdHyper = parse_block("model", map.get("model").cloned().unwrap_or(Value::Object(Default::default())))?;
        model.validate()?;
        let eval: EvalBlock = parse_block("eval", map.get("eval").cloned().unwrap_or(Value::Object(Default::default())))?;
        if eval.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(invalid("eval.thresholds", "must be finite"));
        }
        let seeds: Vec<u64> = parse_block("seeds", map.get("seeds").cloned().unwrap_or(Value::from(vec![0])))?;
        if seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(invalid("seeds", "duplicate seed"));
        }
        Ok(ExperimentConfig { name, dataset, model, eval, seeds })
    }

    pub fn from_json(text: &str) -> LabResult<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::Io { path: path.to_path_buf(), source: e })?;
        Self::from_json(&text)
    }

    /// Replace the seed list by a single seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }

    pub fn out_dir(&self, overridden: Option<&Path>) -> PathBuf {
        match (overridden, &self.eval.out_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => p.clone(),
            (None, None) => PathBuf::from("runs").join(&self.name),
        }
    }
}
