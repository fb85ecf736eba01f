// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::{ControlEntry, RuntimeOverrides};
use crate::error::{Error, Result};
use crate::evaluation::{Metric, Perplexity, RewardScore, ScoreTransform, StrictInstruction};
use crate::runtime::{init_random, load_weights, GenParams, Model, ModelConfig};

/// Where the base model comes from: a weight file, or a config initialized
/// with a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    File(PathBuf),
    Init { config: PathBuf, seed: u64 },
}

impl ModelSpec {
    pub fn load(&self, base_dir: &Path) -> Result<Model> {
        match self {
            Self::File(p) => load_weights(&base_dir.join(p)),
            Self::Init { config, seed } => {
                let path = base_dir.join(config);
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let cfg: ModelConfig = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                init_random(&cfg, *seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "metric", deny_unknown_fields)]
pub enum MetricSpec {
    StrictInstruction,
    RewardScore {
        #[serde(default)]
        score_transform: ScoreTransform,
    },
    Perplexity,
}

impl MetricSpec {
    pub fn build(&self, base_model: &Arc<Model>) -> Box<dyn Metric> {
        match *self {
            Self::StrictInstruction => Box::new(StrictInstruction),
            Self::RewardScore { score_transform } => Box::new(RewardScore::new(base_model.clone(), score_transform)),
            Self::Perplexity => Box::new(Perplexity::new(base_model.clone())),
        }
    }
}

fn default_metrics() -> Vec<MetricSpec> {
    vec![
        MetricSpec::StrictInstruction,
        MetricSpec::RewardScore {
            score_transform: ScoreTransform::Identity,
        },
    ]
}

fn one() -> usize {
    1
}

/// A benchmark as read from JSON. File paths are relative to `base_dir`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub model: ModelSpec,
    /// Evaluation datapoints (JSON array).
    pub data: PathBuf,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricSpec>,
    /// Pipeline name to its controls; an empty list is a baseline.
    pub steering_pipelines: BTreeMap<String, Vec<ControlEntry>>,
    #[serde(default)]
    pub runtime_overrides: RuntimeOverrides,
    #[serde(default = "one")]
    pub num_trials: usize,
    pub gen: GenParams,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl BenchmarkConfig {
    pub fn from_value(value: Value, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("benchmark config: {e}")))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.steering_pipelines.is_empty() {
            return Err(Error::Config("no steering pipelines".into()));
        }
        if self.num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metrics".into()));
        }
        for entries in self.steering_pipelines.values() {
            for e in entries {
                if e.is_swept() {
                    e.to_spec()?.expand()?;
                }
            }
        }
        Ok(())
    }

    pub fn data_path(&self) -> PathBuf {
        self.base_dir.join(&self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn sweep_shape_parses() {
        let cfg = BenchmarkConfig::from_value(
            json!({
                "model": {"config": "model.json", "seed": 1},
                "data": "data.json",
                "steering_pipelines": {
                    "baseline": [],
                    "pasta_alpha_sweep": [{
                        "control": "PASTA",
                        "params": {"head_config": [8, 9], "scale_position": "include"},
                        "vars": {"alpha": [5, 10, 15, 20, 25, 30]}
                    }]
                },
                "runtime_overrides": {"PASTA": {"substrings": "instructions"}},
                "num_trials": 10,
                "gen": {"max_new_tokens": 8}
            }),
            "/tmp",
        )
        .unwrap();
        assert_eq!(cfg.steering_pipelines.len(), 2);
        assert_eq!(cfg.metrics, default_metrics());
        assert_eq!(cfg.model, ModelSpec::Init { config: "model.json".into(), seed: 1 });
    }

    #[test]
    fn rejects_bad_sweeps() {
        let r = BenchmarkConfig::from_value(
            json!({
                "model": "m.stw", "data": "d.json", "gen": {"max_new_tokens": 8},
                "steering_pipelines": {"p": [{"control": "PASTA", "vars": {"alpha": []}}]}
            }),
            ".",
        );
        assert!(matches!(r, Err(Error::Spec(_))));
    }
}
