// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::OutputControl;
use crate::error::{Error, Result};
use crate::runtime::{default_generate, GenParams, Hook, HookSite, Model, ResolvedOverrides};

/// `logits[t] += bias[t]` for every biased token.
pub fn logit_bias(logits: &[f32], bias: &BTreeMap<u32, f32>) -> Result<Vec<f32>> {
    let mut out = logits.to_vec();
    for (&t, &b) in bias {
        let slot = out.get_mut(t as usize).ok_or(Error::Bias(t))?;
        *slot += b;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitBiasParams {
    /// Token id to additive bias.
    #[serde(default)]
    pub bias: BTreeMap<u32, f32>,
}

/// Default decoding over biased logits.
#[derive(Debug, Clone)]
pub struct LogitBias {
    name: String,
    bias: BTreeMap<u32, f32>,
}

impl LogitBias {
    pub fn new(name: impl Into<String>, params: LogitBiasParams) -> Self {
        Self {
            name: name.into(),
            bias: params.bias,
        }
    }

    /// Hook that applies the bias to every row of the logits.
    pub fn hook(&self) -> Hook {
        let bias = self.bias.clone();
        Hook::new(HookSite::Logits, format!("{}.bias", self.name), move |_, mut logits| {
            if bias.is_empty() {
                return logits;
            }
            let v = logits.row_len();
            for row in logits.data_mut().chunks_mut(v) {
                for (&t, &b) in &bias {
                    row[t as usize] += b;
                }
            }
            logits
        })
    }
}

impl OutputControl for LogitBias {
    fn name(&self) -> &str {
        &self.name
    }

    fn steer(&mut self, model: &Model) -> Result<()> {
        let vocab = model.config().vocab_size;
        match self.bias.keys().find(|&&t| t as usize >= vocab) {
            Some(&t) => Err(Error::Bias(t)),
            None => Ok(()),
        }
    }

    fn generate(
        &self,
        model: &Model,
        prompt_ids: &[u32],
        params: &GenParams,
        hooks: &[Hook],
        overrides: &Arc<ResolvedOverrides>,
    ) -> Result<Vec<u32>> {
        let mut all = hooks.to_vec();
        all.push(self.hook());
        default_generate(model, prompt_ids, params, &all, overrides)
    }
}
