// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::benchmark::{BenchmarkConfig, ConfigError, ConfigSummary, Metadata, ResultRow, ResultTable};
use crate::control::{build_control, ControlEntry, RuntimeOverrides, SteeringPipeline};
use crate::error::{Error, Result};
use crate::evaluation::{load_datapoints, usecase_run, InstructionFollowing, UseCase};
use crate::runtime::{GenParams, Model, ParamMap};

/// One concrete configuration of one pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkUnit {
    pub pipeline: String,
    /// (class, name, full params) per control, in pipeline order.
    pub controls: Vec<(String, String, ParamMap)>,
    /// Swept values keyed `"<control name>.<variable>"`.
    pub params: ParamMap,
}

/// Expands every pipeline's controls. Several swept controls in one
/// pipeline combine as a Cartesian product, the first control varying
/// slowest. Pipelines run in name order.
pub fn expand_pipelines(pipelines: &BTreeMap<String, Vec<ControlEntry>>) -> Result<Vec<WorkUnit>> {
    let mut units = Vec::new();
    for (name, entries) in pipelines {
        let mut partial = vec![WorkUnit {
            pipeline: name.clone(),
            controls: Vec::new(),
            params: ParamMap::new(),
        }];
        for entry in entries {
            let configs = entry.expand()?;
            partial = partial
                .into_iter()
                .flat_map(|unit| {
                    configs.iter().map(move |(full, swept)| {
                        let mut u = unit.clone();
                        u.controls.push((entry.control.clone(), entry.name().to_owned(), full.clone()));
                        for (k, v) in swept {
                            u.params.insert(format!("{}.{k}", entry.name()), v.clone());
                        }
                        u
                    })
                })
                .collect();
        }
        units.extend(partial);
    }
    Ok(units)
}

/// Compares steering pipelines on a use case.
pub struct Benchmark {
    pub use_case: Arc<dyn UseCase>,
    pub base_model: Arc<Model>,
    pub steering_pipelines: BTreeMap<String, Vec<ControlEntry>>,
    pub runtime_overrides: RuntimeOverrides,
    pub num_trials: usize,
    pub gen: GenParams,
    pub workers: usize,
    /// Relative file params of controls resolve against this.
    pub base_dir: PathBuf,
}

type UnitOutcome = std::result::Result<(Vec<ResultRow>, Vec<String>), String>;

impl Benchmark {
    pub fn from_config(cfg: &BenchmarkConfig) -> Result<Self> {
        let base_model = Arc::new(cfg.model.load(&cfg.base_dir)?);
        let data = load_datapoints(&cfg.data_path())?;
        let metrics = cfg.metrics.iter().map(|m| m.build(&base_model)).collect();
        Ok(Self {
            use_case: Arc::new(InstructionFollowing::new(data, metrics)?),
            base_model,
            steering_pipelines: cfg.steering_pipelines.clone(),
            runtime_overrides: cfg.runtime_overrides.clone(),
            num_trials: cfg.num_trials,
            gen: cfg.gen.clone(),
            workers: cfg.workers,
            base_dir: cfg.base_dir.clone(),
        })
    }

    fn run_unit(&self, unit: &WorkUnit) -> UnitOutcome {
        let run = || -> Result<(Vec<ResultRow>, Vec<String>)> {
            let controls = unit
                .controls
                .iter()
                .map(|(cls, name, params)| build_control(cls, name, params, &self.base_dir))
                .collect::<Result<Vec<_>>>()?;
            let mut pipeline = SteeringPipeline::new(self.base_model.as_ref(), controls)?;
            pipeline.steer()?;
            let overrides = self.runtime_overrides.restricted_to(pipeline.control_names());
            let (generations, report) =
                usecase_run(self.use_case.as_ref(), &pipeline, &overrides, self.num_trials, &self.gen)?;
            let mut rows = Vec::with_capacity(generations.len() * report.results.len());
            for (i, g) in generations.iter().enumerate() {
                for m in &report.results {
                    rows.push(ResultRow {
                        pipeline: unit.pipeline.clone(),
                        params: unit.params.clone(),
                        trial: g.trial,
                        datapoint: g.datapoint_id.clone(),
                        metric: m.metric.clone(),
                        score: m.scores[i],
                    });
                }
            }
            let failures = report
                .failures
                .into_iter()
                .map(|f| format!("metric {}: {}", f.metric, f.message))
                .collect();
            Ok((rows, failures))
        };
        run().map_err(|e| e.to_string())
    }

    /// Runs every configuration on `workers` threads. Rows come out in
    /// configuration order whatever the completion order; a failing
    /// configuration is recorded in the metadata and skipped.
    pub fn run(&self) -> Result<ResultTable> {
        if self.num_trials == 0 || self.workers == 0 {
            return Err(Error::Config("num_trials and workers must be at least 1".into()));
        }
        let units = expand_pipelines(&self.steering_pipelines)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let outcomes: Vec<UnitOutcome> = pool.install(|| units.par_iter().map(|u| self.run_unit(u)).collect());

        let mut rows = Vec::new();
        let mut errors = Vec::new();
        let mut configs = Vec::new();
        for (unit, outcome) in units.iter().zip(outcomes) {
            let error = |message: String| ConfigError {
                pipeline: unit.pipeline.clone(),
                params: unit.params.clone(),
                message,
            };
            let ok = match outcome {
                Ok((r, failures)) => {
                    rows.extend(r);
                    errors.extend(failures.into_iter().map(error));
                    true
                }
                Err(message) => {
                    errors.push(error(message));
                    false
                }
            };
            configs.push(ConfigSummary {
                pipeline: unit.pipeline.clone(),
                params: unit.params.clone(),
                ok,
            });
        }
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(ResultTable {
            rows,
            metadata: Metadata {
                seed: self.gen.seed(),
                model_checksum: self.base_model.checksum(),
                timestamp,
                num_trials: self.num_trials,
                num_datapoints: self.use_case.data().len(),
                baseline_pipelines: self
                    .steering_pipelines
                    .iter()
                    .filter(|(_, c)| c.is_empty())
                    .map(|(n, _)| n.clone())
                    .collect(),
                configs,
                errors,
            },
        })
    }
}

/// Loads the model and data named by `cfg` and runs it.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<ResultTable> {
    Benchmark::from_config(cfg)?.run()
}
