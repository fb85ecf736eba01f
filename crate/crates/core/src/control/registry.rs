// SPDX-License-Identifier: MIT OR Apache-2.0

//! Builds controls from JSON descriptions.
//!
//! | class | surface | file params (relative to the config) |
//! |-------|---------|--------------------------------------|
//! | `CAA` | state | `data`: contrastive pairs JSONL |
//! | `ActAdd` | state | |
//! | `ITI` | state | `data`: labeled prompts JSONL |
//! | `PASTA` | state | |
//! | `FewShot` | input | `pool`: examples JSONL |
//! | `Prefix` | input | |
//! | `TaskVector` | structural | `delta`: weight file |
//! | `Interpolate` | structural | `other`: weight file |
//! | `DeAL` | output | |
//! | `LogitBias` | output | |

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::control::{Control, ControlSpec, VarMode};
use crate::error::{Error, Result};
use crate::input::{ExamplePool, FewShot, Prefix};
use crate::output::{Deal, LogitBias};
use crate::runtime::{load_weights, ParamMap};
use crate::state::{load_labeled_prompts, load_pairs, ActAdd, Caa, Iti, Pasta};
use crate::structural::{load_delta, Interpolate, TaskVector};

pub const CONTROL_CLASSES: &[&str] = &[
    "CAA",
    "ActAdd",
    "ITI",
    "PASTA",
    "FewShot",
    "Prefix",
    "TaskVector",
    "Interpolate",
    "DeAL",
    "LogitBias",
];

fn resolve(base_dir: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_owned()
    } else {
        base_dir.join(p)
    }
}

fn take_path(cls: &str, params: &mut ParamMap, key: &str, base_dir: &Path) -> Result<PathBuf> {
    match params.remove(key) {
        Some(Value::String(s)) => Ok(resolve(base_dir, &s)),
        Some(other) => Err(Error::Config(format!("{cls}.{key} must be a path string, got {other}"))),
        None => Err(Error::Config(format!("{cls} needs a `{key}` path"))),
    }
}

fn typed<T: DeserializeOwned>(cls: &str, params: ParamMap) -> Result<T> {
    let obj: Map<String, Value> = params.into_iter().collect();
    serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(format!("{cls} params: {e}")))
}

/// Instantiates control class `cls` with concrete `params`.
pub fn build_control(cls: &str, name: &str, params: &ParamMap, base_dir: &Path) -> Result<Control> {
    let mut p = params.clone();
    let control = match cls {
        "CAA" => {
            let pairs = load_pairs(&take_path(cls, &mut p, "data", base_dir)?)?;
            Control::state(Caa::new(name, typed(cls, p)?, pairs)?)
        }
        "ActAdd" => Control::state(ActAdd::new(name, typed(cls, p)?)),
        "ITI" => {
            let data = load_labeled_prompts(&take_path(cls, &mut p, "data", base_dir)?)?;
            Control::state(Iti::new(name, typed(cls, p)?, data)?)
        }
        "PASTA" => Control::state(Pasta::new(name, typed(cls, p)?)?),
        "FewShot" => {
            let pool = ExamplePool::load(&take_path(cls, &mut p, "pool", base_dir)?)?;
            Control::input(FewShot::new(name, typed(cls, p)?, pool))
        }
        "Prefix" => Control::input(Prefix::new(name, typed(cls, p)?)),
        "TaskVector" => {
            let delta = load_delta(&take_path(cls, &mut p, "delta", base_dir)?)?;
            Control::structural(TaskVector::new(name, typed(cls, p)?, delta))
        }
        "Interpolate" => {
            let other = load_weights(&take_path(cls, &mut p, "other", base_dir)?)?;
            Control::structural(Interpolate::new(name, typed(cls, p)?, other.into_parts().1))
        }
        "DeAL" => Control::output(Deal::new(name, typed(cls, p)?)?),
        "LogitBias" => Control::output(LogitBias::new(name, typed(cls, p)?)),
        other => {
            return Err(Error::Registry(format!(
                "control class `{other}` (known: {})",
                CONTROL_CLASSES.join(", ")
            )))
        }
    };
    Ok(control)
}

/// A control as written in a config: fixed `params`, optionally swept
/// `vars` (each a list of values, expanded as a grid unless `zip`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlEntry {
    pub control: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub params: ParamMap,
    #[serde(default, skip_serializing_if = "Map::is_empty")]
    pub vars: Map<String, Value>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zip: bool,
}

impl ControlEntry {
    pub fn fixed(control: &str, params: ParamMap) -> Self {
        Self {
            control: control.to_owned(),
            name: None,
            params,
            vars: Map::new(),
            zip: false,
        }
    }

    /// Defaults to the class name.
    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.control)
    }

    pub fn is_swept(&self) -> bool {
        !self.vars.is_empty()
    }

    pub fn to_spec(&self) -> Result<ControlSpec> {
        let mut spec = ControlSpec::new(&self.control, self.name()).params(self.params.clone());
        for (k, v) in &self.vars {
            let values = v
                .as_array()
                .ok_or_else(|| Error::Spec(format!("variable `{k}` of `{}` must be a list", self.name())))?;
            spec = spec.var(k, values.clone());
        }
        if self.zip {
            spec = spec.mode(VarMode::Zipped);
        }
        Ok(spec)
    }

    /// Every concrete configuration as (full params, swept values only).
    pub fn expand(&self) -> Result<Vec<(ParamMap, ParamMap)>> {
        if !self.is_swept() {
            return Ok(vec![(self.params.clone(), ParamMap::new())]);
        }
        let spec = self.to_spec()?;
        Ok(spec
            .expand()?
            .into_iter()
            .map(|full| {
                let swept = self
                    .vars
                    .keys()
                    .map(|k| (k.clone(), full[k].clone()))
                    .collect();
                (full, swept)
            })
            .collect())
    }

    /// Builds a fixed control.
    pub fn build(&self, base_dir: &Path) -> Result<Control> {
        if self.is_swept() {
            return Err(Error::Config(format!(
                "`{}` declares swept variables; only benchmarks expand sweeps",
                self.name()
            )));
        }
        build_control(&self.control, self.name(), &self.params, base_dir)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PipelineFile {
    Wrapped { controls: Vec<ControlEntry> },
    Bare(Vec<ControlEntry>),
}

/// An ordered list of fixed controls, as read from a JSON file holding
/// either `{"controls": [...]}` or a bare list.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub controls: Vec<ControlEntry>,
    /// Relative file params resolve against this directory.
    pub base_dir: PathBuf,
}

impl PipelineConfig {
    pub fn from_value(value: Value, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let file: PipelineFile =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("pipeline config: {e}")))?;
        let controls = match file {
            PipelineFile::Wrapped { controls } | PipelineFile::Bare(controls) => controls,
        };
        Ok(Self {
            controls,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_value(value, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn build(&self) -> Result<Vec<Control>> {
        self.controls.iter().map(|c| c.build(&self.base_dir)).collect()
    }
}
