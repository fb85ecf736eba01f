// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::runtime::{ParamMap, ResolvedOverrides};

/// One overridden field.
///
/// In JSON a bare string names a datapoint field (`"instructions"`), an
/// object `{"literal": v}` is the literal `v`, and any other value is
/// taken literally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Value", into = "Value")]
pub enum OverrideValue {
    Field(String),
    Literal(Value),
}

impl From<Value> for OverrideValue {
    fn from(v: Value) -> Self {
        match v {
            Value::String(s) => Self::Field(s),
            Value::Object(mut m) if m.len() == 1 && m.contains_key("literal") => {
                Self::Literal(m.remove("literal").expect("checked"))
            }
            other => Self::Literal(other),
        }
    }
}

impl From<OverrideValue> for Value {
    fn from(v: OverrideValue) -> Self {
        match v {
            OverrideValue::Field(s) => Value::String(s),
            OverrideValue::Literal(v) => {
                let mut m = serde_json::Map::new();
                m.insert("literal".into(), v);
                Value::Object(m)
            }
        }
    }
}

/// Control name → field → value, supplied per datapoint at inference time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuntimeOverrides(pub BTreeMap<String, BTreeMap<String, OverrideValue>>);

impl RuntimeOverrides {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, control: &str, param: &str, datapoint_field: &str) -> Self {
        self.0
            .entry(control.to_owned())
            .or_default()
            .insert(param.to_owned(), OverrideValue::Field(datapoint_field.to_owned()));
        self
    }

    pub fn literal(mut self, control: &str, param: &str, value: Value) -> Self {
        self.0
            .entry(control.to_owned())
            .or_default()
            .insert(param.to_owned(), OverrideValue::Literal(value));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn controls(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Keeps only the entries for the named controls.
    pub fn restricted_to<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> Self {
        let names: Vec<&str> = names.into_iter().collect();
        Self(
            self.0
                .iter()
                .filter(|(k, _)| names.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        )
    }

    /// Replaces every field reference with the datapoint's value.
    pub fn resolve(&self, datapoint: Option<&Value>) -> Result<ResolvedOverrides> {
        let mut out = ResolvedOverrides::new();
        for (control, fields) in &self.0 {
            let mut resolved = ParamMap::new();
            for (param, value) in fields {
                let v = match value {
                    OverrideValue::Literal(v) => v.clone(),
                    OverrideValue::Field(field) => datapoint
                        .and_then(|d| d.get(field))
                        .cloned()
                        .ok_or_else(|| {
                            Error::Override(format!(
                                "field `{field}` (for {control}.{param}) is not present in the datapoint"
                            ))
                        })?,
                };
                resolved.insert(param.clone(), v);
            }
            out.insert(control.clone(), resolved);
        }
        Ok(out)
    }
}
