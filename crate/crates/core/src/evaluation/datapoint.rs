// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evaluation::checkers::validate_instruction;
use crate::runtime::ParamMap;

/// One evaluation prompt with its verifiable instructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: String,
    pub prompt: String,
    /// Instruction text as it appears in the prompt.
    #[serde(default)]
    pub instructions: Vec<String>,
    pub instruction_id_list: Vec<String>,
    /// Arguments for each checker, parallel to `instruction_id_list`.
    pub kwargs: Vec<Value>,
    /// Any further fields, available to runtime overrides.
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl DataPoint {
    pub fn validate(&self) -> Result<()> {
        if self.instruction_id_list.len() != self.kwargs.len() {
            return Err(Error::Config(format!(
                "datapoint `{}`: {} checker ids but {} kwargs",
                self.id,
                self.instruction_id_list.len(),
                self.kwargs.len()
            )));
        }
        for (checker, kwargs) in self.instruction_id_list.iter().zip(&self.kwargs) {
            validate_instruction(checker, kwargs)?;
        }
        Ok(())
    }

    /// The datapoint as a JSON object, for resolving field overrides.
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("datapoints serialize")
    }
}

/// Validates every datapoint and rejects duplicate ids.
pub fn validate_datapoints(data: &[DataPoint]) -> Result<()> {
    let mut seen = HashSet::new();
    for dp in data {
        dp.validate()?;
        if !seen.insert(dp.id.as_str()) {
            return Err(Error::Config(format!("duplicate datapoint id `{}`", dp.id)));
        }
    }
    Ok(())
}

/// Reads a JSON array of datapoints.
pub fn load_datapoints(path: &Path) -> Result<Vec<DataPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let data: Vec<DataPoint> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    validate_datapoints(&data)?;
    Ok(data)
}

/// One response to one datapoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub pipeline: String,
    /// Swept parameter values of the configuration that produced it.
    pub params: ParamMap,
    pub datapoint_id: String,
    pub trial: usize,
    pub adapted_prompt: String,
    pub response: String,
    pub response_ids: Vec<u32>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn reference_schema_parses() {
        let v = json!({
            "id": "9ea5f62d-b208-4355-86cd",
            "prompt": "Write a long email template. Your response should follow the instructions below:\n- Write at least 500 words\n- Do not use any commas",
            "instructions": ["- Write at least 500 words", "- Do not use any commas"],
            "instruction_id_list": ["length_constraints:number_words", "punctuation:no_comma"],
            "kwargs": [{"relation": "at least", "num_words": 500}, {}]
        });
        let dp: DataPoint = serde_json::from_value(v.clone()).unwrap();
        dp.validate().unwrap();
        assert!(dp.extra.is_empty());
        assert_eq!(dp.to_value(), v);
    }

    #[test]
    fn mismatched_kwargs() {
        let dp: DataPoint = serde_json::from_value(json!({
            "id": "a", "prompt": "p",
            "instruction_id_list": ["punctuation:no_comma"], "kwargs": []
        }))
        .unwrap();
        assert!(matches!(dp.validate(), Err(Error::Config(_))));
    }
}
