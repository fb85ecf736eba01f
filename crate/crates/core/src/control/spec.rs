// SPDX-License-Identifier: MIT OR Apache-2.0

//! Control specifications: a control class with fixed parameters plus
//! swept variables that expand into concrete parameter maps.

use std::sync::Arc;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::runtime::ParamMap;

/// Computes a variable from the parameters expanded so far.
pub type DeriveFn = Arc<dyn Fn(&ParamMap) -> Value + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarMode {
    /// Cartesian product; the first declared variable varies slowest.
    #[default]
    Grid,
    /// Equal-length lists consumed positionally.
    Zipped,
}

#[derive(Clone)]
pub struct ControlSpec {
    pub control_cls: String,
    pub name: String,
    pub params: ParamMap,
    vars: Vec<(String, Vec<Value>)>,
    mode: VarMode,
    derived: Vec<(String, DeriveFn)>,
}

impl std::fmt::Debug for ControlSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlSpec")
            .field("control_cls", &self.control_cls)
            .field("name", &self.name)
            .field("params", &self.params)
            .field("vars", &self.vars)
            .field("mode", &self.mode)
            .field("derived", &self.derived.iter().map(|(n, _)| n).collect::<Vec<_>>())
            .finish()
    }
}

impl ControlSpec {
    pub fn new(control_cls: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            control_cls: control_cls.into(),
            name: name.into(),
            params: ParamMap::new(),
            vars: Vec::new(),
            mode: VarMode::Grid,
            derived: Vec::new(),
        }
    }

    pub fn param(mut self, key: &str, value: Value) -> Self {
        self.params.insert(key.to_owned(), value);
        self
    }

    pub fn params(mut self, params: ParamMap) -> Self {
        self.params.extend(params);
        self
    }

    /// Declares a swept variable; declaration order fixes expansion order.
    pub fn var(mut self, key: &str, values: Vec<Value>) -> Self {
        self.vars.push((key.to_owned(), values));
        self
    }

    pub fn mode(mut self, mode: VarMode) -> Self {
        self.mode = mode;
        self
    }

    /// Adds a variable computed from the already-expanded ones.
    pub fn derive(
        mut self,
        key: &str,
        f: impl Fn(&ParamMap) -> Value + Send + Sync + 'static,
    ) -> Self {
        self.derived.push((key.to_owned(), Arc::new(f)));
        self
    }

    /// Names of swept and derived variables, in declaration order.
    pub fn swept_names(&self) -> Vec<&str> {
        self.vars
            .iter()
            .map(|(k, _)| k.as_str())
            .chain(self.derived.iter().map(|(k, _)| k.as_str()))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.vars.is_empty() {
            return Err(Error::Spec(format!("spec `{}` declares no variables", self.name)));
        }
        let mut seen = std::collections::HashSet::new();
        for key in self.swept_names() {
            if self.params.contains_key(key) {
                return Err(Error::Spec(format!(
                    "`{key}` is both a fixed param and a variable in spec `{}`",
                    self.name
                )));
            }
            if !seen.insert(key) {
                return Err(Error::Spec(format!("variable `{key}` declared twice in spec `{}`", self.name)));
            }
        }
        if let Some((k, _)) = self.vars.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Spec(format!("variable `{k}` has no values")));
        }
        if self.mode == VarMode::Zipped {
            let n = self.vars[0].1.len();
            if let Some((k, v)) = self.vars.iter().find(|(_, v)| v.len() != n) {
                return Err(Error::Spec(format!(
                    "zipped variable `{k}` has {} values, expected {n}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    /// Concrete parameter maps (fixed params plus one value per variable).
    pub fn expand(&self) -> Result<Vec<ParamMap>> {
        self.validate()?;
        let combos: Vec<Vec<&Value>> = match self.mode {
            VarMode::Zipped => (0..self.vars[0].1.len())
                .map(|i| self.vars.iter().map(|(_, v)| &v[i]).collect())
                .collect(),
            VarMode::Grid => {
                let mut combos: Vec<Vec<&Value>> = vec![Vec::new()];
                for (_, values) in &self.vars {
                    combos = combos
                        .into_iter()
                        .flat_map(|prefix| {
                            values.iter().map(move |v| {
                                let mut next = prefix.clone();
                                next.push(v);
                                next
                            })
                        })
                        .collect();
                }
                combos
            }
        };
        Ok(combos
            .into_iter()
            .map(|combo| {
                let mut map = self.params.clone();
                for ((k, _), v) in self.vars.iter().zip(combo) {
                    map.insert(k.clone(), v.clone());
                }
                for (k, f) in &self.derived {
                    let v = f(&map);
                    map.insert(k.clone(), v);
                }
                map
            })
            .collect())
    }
}

/// See [`ControlSpec::expand`].
pub fn expand_control_spec(spec: &ControlSpec) -> Result<Vec<ParamMap>> {
    spec.expand()
}
