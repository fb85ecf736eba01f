// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::check_instruction;
use crate::runtime::ParamMap;

pub type RewardCallback = dyn Fn(&str, &str) -> f64 + Send + Sync;

/// Text-level reward for a completion; higher is better.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reward {
    /// Fraction of keywords present, case-insensitively.
    Keyword { keywords: Vec<String> },
    /// Fraction of instructions satisfied. Checker ids and kwargs come from
    /// the control's runtime overrides `instruction_id_list` and `kwargs`.
    Instruction,
    Constant { value: f64 },
    #[serde(skip)]
    Custom {
        name: String,
        callback: Arc<RewardCallback>,
    },
}

impl fmt::Debug for Reward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Keyword { keywords } => f.debug_struct("Keyword").field("keywords", keywords).finish(),
            Self::Instruction => f.write_str("Instruction"),
            Self::Constant { value } => f.debug_struct("Constant").field("value", value).finish(),
            Self::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish_non_exhaustive(),
        }
    }
}

impl Reward {
    pub fn custom(name: impl Into<String>, callback: impl Fn(&str, &str) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom {
            name: name.into(),
            callback: Arc::new(callback),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Keyword { .. } => "keyword",
            Self::Instruction => "instruction",
            Self::Constant { .. } => "constant",
            Self::Custom { name, .. } => name,
        }
    }

    /// Fails early if the overrides cannot feed this reward.
    pub fn check_overrides(&self, overrides: &ParamMap) -> Result<()> {
        if let Self::Instruction = self {
            instruction_args(overrides)?;
        }
        Ok(())
    }

    pub fn score(&self, prompt: &str, completion: &str, overrides: &ParamMap) -> Result<f64> {
        Ok(match self {
            Self::Keyword { keywords } => {
                if keywords.is_empty() {
                    return Ok(0.0);
                }
                let lower = completion.to_lowercase();
                let hits = keywords.iter().filter(|k| lower.contains(&k.to_lowercase())).count();
                hits as f64 / keywords.len() as f64
            }
            Self::Instruction => {
                let (ids, kwargs) = instruction_args(overrides)?;
                if ids.is_empty() {
                    return Ok(1.0);
                }
                let mut passed = 0;
                for (id, kw) in ids.iter().zip(kwargs) {
                    let id = id.as_str().ok_or_else(|| Error::Override("checker ids must be strings".into()))?;
                    if check_instruction(id, kw, completion)? {
                        passed += 1;
                    }
                }
                passed as f64 / ids.len() as f64
            }
            Self::Constant { value } => *value,
            Self::Custom { callback, .. } => callback(prompt, completion),
        })
    }
}

fn instruction_args(overrides: &ParamMap) -> Result<(&Vec<Value>, &Vec<Value>)> {
    let get = |key: &str| {
        overrides
            .get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Override(format!("instruction reward needs a `{key}` list override")))
    };
    let (ids, kwargs) = (get("instruction_id_list")?, get("kwargs")?);
    if ids.len() != kwargs.len() {
        return Err(Error::Override(format!("{} checker ids but {} kwargs", ids.len(), kwargs.len())));
    }
    Ok((ids, kwargs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keyword_and_constant() {
        let r: Reward = serde_json::from_value(json!({"kind": "keyword", "keywords": ["yes"]})).unwrap();
        let o = ParamMap::new();
        assert_eq!(r.score("", "oh YES", &o).unwrap(), 1.0);
        assert_eq!(r.score("", "no", &o).unwrap(), 0.0);
        let c: Reward = serde_json::from_value(json!({"kind": "constant", "value": 2.5})).unwrap();
        assert_eq!(c.score("", "x", &o).unwrap(), 2.5);
    }

    #[test]
    fn instruction_reads_overrides() {
        let r = Reward::Instruction;
        let mut o = ParamMap::new();
        assert!(matches!(r.score("", "a", &o), Err(Error::Override(_))));
        o.insert("instruction_id_list".into(), json!(["punctuation:no_comma", "keywords:existence"]));
        o.insert("kwargs".into(), json!([{}, {"keywords": ["cat"]}]));
        assert_eq!(r.score("", "a dog", &o).unwrap(), 0.5);
        assert_eq!(r.score("", "a cat", &o).unwrap(), 1.0);
    }
}
