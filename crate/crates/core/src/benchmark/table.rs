// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::MetricResult;
use crate::runtime::ParamMap;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const METADATA_JSON: &str = "metadata.json";

/// One score of one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRow {
    pub pipeline: String,
    /// Swept values keyed `"<control name>.<variable>"`.
    pub params: ParamMap,
    pub trial: usize,
    pub datapoint: String,
    pub metric: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigError {
    pub pipeline: String,
    pub params: ParamMap,
    pub message: String,
}

/// Run facts kept apart from the rows so reruns produce identical rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub model_checksum: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub num_trials: usize,
    pub num_datapoints: usize,
    /// Pipelines with no controls.
    pub baseline_pipelines: Vec<String>,
    /// Configurations that ran, in execution order.
    pub configs: Vec<ConfigSummary>,
    pub errors: Vec<ConfigError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub pipeline: String,
    pub params: ParamMap,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: Metadata,
}

/// Mean score per configuration and metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigAggregate {
    pub pipeline: String,
    pub params: ParamMap,
    pub metrics: BTreeMap<String, MetricResult>,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ResultTable {
    /// Every parameter column, sorted by name.
    pub fn param_columns(&self) -> Vec<String> {
        let cols: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.params.keys()).collect();
        cols.into_iter().cloned().collect()
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let cols = self.param_columns();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["pipeline".to_owned()];
        header.extend(cols.iter().cloned());
        header.extend(["trial", "datapoint", "metric", "score"].map(str::to_owned));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.pipeline.clone()];
            rec.extend(cols.iter().map(|c| r.params.get(c).map(cell).unwrap_or_default()));
            rec.push(r.trial.to_string());
            rec.push(r.datapoint.clone());
            rec.push(r.metric.clone());
            rec.push(r.score.to_string());
            w.write_record(&rec)?;
        }
        w.into_inner().map_err(|e| Error::Config(format!("csv buffer: {e}")))
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for r in &self.rows {
            serde_json::to_writer(&mut out, r)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Writes `results.csv`, `results.jsonl` and `metadata.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(bytes).map_err(|e| Error::io(&path, e))
        };
        write(RESULTS_CSV, &self.to_csv()?)?;
        write(RESULTS_JSONL, &self.to_jsonl()?)?;
        let mut meta = serde_json::to_vec_pretty(&self.metadata)?;
        meta.push(b'\n');
        write(METADATA_JSON, &meta)
    }

    /// Reads back what [`ResultTable::export`] wrote.
    pub fn read(dir: &Path) -> Result<Self> {
        let rows = crate::jsonl::read_jsonl(&dir.join(RESULTS_JSONL))?;
        let path = dir.join(METADATA_JSON);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let metadata =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(Self { rows, metadata })
    }

    pub fn metrics(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.metric.as_str()).collect()
    }

    /// Aggregates in first-appearance order of (pipeline, params).
    pub fn aggregates(&self) -> Vec<ConfigAggregate> {
        let mut order: Vec<(String, ParamMap)> = Vec::new();
        let mut scores: Vec<BTreeMap<String, Vec<f64>>> = Vec::new();
        for r in &self.rows {
            let idx = match order.iter().position(|(p, q)| *p == r.pipeline && *q == r.params) {
                Some(i) => i,
                None => {
                    order.push((r.pipeline.clone(), r.params.clone()));
                    scores.push(BTreeMap::new());
                    order.len() - 1
                }
            };
            scores[idx].entry(r.metric.clone()).or_default().push(r.score);
        }
        order
            .into_iter()
            .zip(scores)
            .map(|((pipeline, params), s)| ConfigAggregate {
                pipeline,
                params,
                metrics: s.into_iter().map(|(m, v)| (m.clone(), MetricResult::new(m, v))).collect(),
            })
            .collect()
    }
}
