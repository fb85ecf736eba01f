// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::runtime::{capture, encode_prompt, HookSite, Model, PAD, PROMPT_OFFSET};
use crate::state::Accumulate;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContrastivePair {
    pub prompt: String,
    pub positive: String,
    pub negative: String,
}

/// Prompts paired with a positive and a negative completion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastivePairs(Vec<ContrastivePair>);

impl ContrastivePairs {
    pub fn new(pairs: Vec<ContrastivePair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyData("contrastive pairs are empty".into()));
        }
        if let Some(i) = pairs.iter().position(|p| p.positive.is_empty() || p.negative.is_empty()) {
            return Err(Error::EmptyData(format!("pair {i} has an empty completion")));
        }
        Ok(Self(pairs))
    }

    pub fn pairs(&self) -> &[ContrastivePair] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Same pairs with positive and negative swapped.
    pub fn swapped(&self) -> Self {
        Self(
            self.0
                .iter()
                .map(|p| ContrastivePair {
                    prompt: p.prompt.clone(),
                    positive: p.negative.clone(),
                    negative: p.positive.clone(),
                })
                .collect(),
        )
    }
}

/// Reads `{"prompt", "positive", "negative"}` JSON lines.
pub fn load_pairs(path: &Path) -> Result<ContrastivePairs> {
    ContrastivePairs::new(crate::jsonl::read_jsonl(path)?)
}

fn check_layer(model: &Model, layer: usize) -> Result<()> {
    if layer >= model.config().n_layers {
        return Err(Error::Selection(format!(
            "layer {layer} out of range (model has {} layers)",
            model.config().n_layers
        )));
    }
    Ok(())
}

fn check_len(model: &Model, ids: &[u32], what: impl FnOnce() -> String) -> Result<()> {
    if ids.len() > model.config().max_seq {
        return Err(Error::Length(format!(
            "{} has {} tokens, max_seq is {}",
            what(),
            ids.len(),
            model.config().max_seq
        )));
    }
    Ok(())
}

/// Residual activation after `layer` for one prompt+completion sequence.
fn completion_activation(
    model: &Model,
    prompt: &str,
    completion: &str,
    layer: usize,
    accumulate: Accumulate,
    pair_index: usize,
) -> Result<Vec<f64>> {
    let ids = encode_prompt(&format!("{prompt}{completion}"));
    check_len(model, &ids, || format!("pair {pair_index}"))?;
    let resid = capture(model, &ids, &[], &[HookSite::ResidualPost(layer)])?.remove(0);
    let d = resid.row_len();
    let rows = match accumulate {
        Accumulate::LastToken => ids.len() - 1..ids.len(),
        Accumulate::MeanOverTokens => PROMPT_OFFSET + prompt.len()..ids.len(),
    };
    let mut acc = vec![0.0f64; d];
    for r in rows.clone() {
        for (a, &x) in acc.iter_mut().zip(resid.row(r)) {
            *a += f64::from(x);
        }
    }
    let n = rows.len() as f64;
    Ok(acc.into_iter().map(|a| a / n).collect())
}

/// Mean over pairs of `h(prompt + positive) − h(prompt + negative)`, where
/// `h` is the residual stream after `layer`.
pub fn estimate_mean_difference(
    model: &Model,
    pairs: &ContrastivePairs,
    layer: usize,
    accumulate: Accumulate,
) -> Result<Tensor> {
    check_layer(model, layer)?;
    let d = model.config().d_model;
    let mut sum = vec![0.0f64; d];
    for (i, pair) in pairs.pairs().iter().enumerate() {
        let pos = completion_activation(model, &pair.prompt, &pair.positive, layer, accumulate, i)?;
        let neg = completion_activation(model, &pair.prompt, &pair.negative, layer, accumulate, i)?;
        for ((s, p), n) in sum.iter_mut().zip(pos).zip(neg) {
            *s += p - n;
        }
    }
    let n = pairs.len() as f64;
    Ok(Tensor::vector(sum.into_iter().map(|s| (s / n) as f32).collect()))
}

/// Per-position residual differences between two prompts, the shorter one
/// padded with PAD. Returns `[m, d_model]` with `m` the longer length
/// (BOS included).
pub fn estimate_single_pair(model: &Model, prompt_pos: &str, prompt_neg: &str, layer: usize) -> Result<Tensor> {
    if prompt_pos.is_empty() || prompt_neg.is_empty() {
        return Err(Error::EmptyData("single-pair prompts must be nonempty".into()));
    }
    check_layer(model, layer)?;
    let mut pos = encode_prompt(prompt_pos);
    let mut neg = encode_prompt(prompt_neg);
    let m = pos.len().max(neg.len());
    pos.resize(m, PAD);
    neg.resize(m, PAD);
    check_len(model, &pos, || "single-pair prompt".to_owned())?;
    let site = [HookSite::ResidualPost(layer)];
    let hp = capture(model, &pos, &[], &site)?.remove(0);
    let hn = capture(model, &neg, &[], &site)?.remove(0);
    let diff = hp.data().iter().zip(hn.data()).map(|(a, b)| a - b).collect();
    Tensor::new(vec![m, model.config().d_model], diff)
}
