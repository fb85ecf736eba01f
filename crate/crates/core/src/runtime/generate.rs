// SPDX-License-Identifier: MIT OR Apache-2.0

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::runtime::forward::{forward_cached, KvCache};
use crate::runtime::hooks::{Hook, ResolvedOverrides, StepContext};
use crate::runtime::model::Model;
use crate::runtime::tokenizer::EOS;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGenParams {
    max_new_tokens: usize,
    #[serde(default)]
    do_sample: bool,
    #[serde(default = "one")]
    temperature: f32,
    #[serde(default)]
    seed: u64,
}

fn one() -> f32 {
    1.0
}

/// Decoding parameters. Construction enforces `max_new_tokens >= 1` and a
/// positive temperature when sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGenParams", into = "RawGenParams")]
pub struct GenParams {
    max_new_tokens: usize,
    do_sample: bool,
    temperature: f32,
    seed: u64,
}

impl TryFrom<RawGenParams> for GenParams {
    type Error = Error;

    fn try_from(raw: RawGenParams) -> Result<Self> {
        Self::new(raw.max_new_tokens, raw.do_sample, raw.temperature, raw.seed)
    }
}

impl From<GenParams> for RawGenParams {
    fn from(p: GenParams) -> Self {
        Self {
            max_new_tokens: p.max_new_tokens,
            do_sample: p.do_sample,
            temperature: p.temperature,
            seed: p.seed,
        }
    }
}

impl GenParams {
    pub fn new(max_new_tokens: usize, do_sample: bool, temperature: f32, seed: u64) -> Result<Self> {
        if max_new_tokens == 0 {
            return Err(Error::GenParams("max_new_tokens must be at least 1".into()));
        }
        if do_sample && !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::GenParams(format!(
                "sampling needs a positive temperature, got {temperature}"
            )));
        }
        Ok(Self {
            max_new_tokens,
            do_sample,
            temperature,
            seed,
        })
    }

    pub fn greedy(max_new_tokens: usize) -> Result<Self> {
        Self::new(max_new_tokens, false, 1.0, 0)
    }

    pub fn sampled(max_new_tokens: usize, temperature: f32, seed: u64) -> Result<Self> {
        Self::new(max_new_tokens, true, temperature, seed)
    }

    pub fn max_new_tokens(&self) -> usize {
        self.max_new_tokens
    }

    pub fn do_sample(&self) -> bool {
        self.do_sample
    }

    pub fn temperature(&self) -> f32 {
        self.temperature
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Index of the largest logit; the lowest id wins ties. NaN never wins.
pub fn argmax(logits: &[f32]) -> u32 {
    let mut best = 0usize;
    let mut best_val = f32::NEG_INFINITY;
    let mut found = false;
    for (i, &v) in logits.iter().enumerate() {
        if !v.is_nan() && (!found || v > best_val) {
            best = i;
            best_val = v;
            found = true;
        }
    }
    best as u32
}

/// Log-probabilities of every token, computed in `f64`.
///
/// Positive-infinite logits share all probability mass equally.
pub fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits
        .iter()
        .copied()
        .filter(|v| !v.is_nan())
        .fold(f32::NEG_INFINITY, f32::max);
    if max == f32::INFINITY {
        let count = logits.iter().filter(|&&v| v == f32::INFINITY).count() as f64;
        return logits
            .iter()
            .map(|&v| if v == f32::INFINITY { -count.ln() } else { f64::NEG_INFINITY })
            .collect();
    }
    let max = f64::from(max);
    let lse = logits
        .iter()
        .filter(|v| !v.is_nan())
        .map(|&v| (f64::from(v) - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    logits
        .iter()
        .map(|&v| if v.is_nan() { f64::NEG_INFINITY } else { f64::from(v) - lse })
        .collect()
}

/// Draw one token from `softmax(logits / temperature)`.
pub fn sample(logits: &[f32], temperature: f32, rng: &mut Rng) -> u32 {
    let inf: Vec<usize> = logits
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == f32::INFINITY)
        .map(|(i, _)| i)
        .collect();
    if !inf.is_empty() {
        return inf[rng.below(inf.len() as u64) as usize] as u32;
    }
    let t = f64::from(temperature);
    let scaled: Vec<f64> = logits
        .iter()
        .map(|&v| if v.is_nan() { f64::NEG_INFINITY } else { f64::from(v) / t })
        .collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return argmax(logits);
    }
    let weights: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.next_f64() * total;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            if u < w {
                return i as u32;
            }
            u -= w;
        }
    }
    last_positive as u32
}

/// Greedy or temperature-sampled decoding with a key/value cache.
///
/// Runs one prefill pass over `prompt_ids`, then one decode pass per new
/// token. Stops at EOS (which is included in the output), after
/// `max_new_tokens`, or when the sequence reaches `max_seq`. Returns only
/// the new tokens.
pub fn default_generate(
    model: &Model,
    prompt_ids: &[u32],
    params: &GenParams,
    hooks: &[Hook],
    overrides: &Arc<ResolvedOverrides>,
) -> Result<Vec<u32>> {
    if prompt_ids.is_empty() {
        return Err(Error::Length("generation needs a nonempty prompt".into()));
    }
    let max_seq = model.config().max_seq;
    let prompt_len = prompt_ids.len();
    let mut cache = KvCache::new(model.config());
    let ctx = StepContext::prefill(prompt_len, overrides.clone());
    let out = forward_cached(model, prompt_ids, &mut cache, hooks, &ctx)?;
    let mut logits = out.logits.row(prompt_len - 1).to_vec();
    let mut rng = Rng::new(params.seed);
    let mut generated = Vec::new();
    for step in 0..params.max_new_tokens {
        if cache.len() >= max_seq {
            break;
        }
        let tok = if params.do_sample {
            sample(&logits, params.temperature, &mut rng)
        } else {
            argmax(&logits)
        };
        generated.push(tok);
        if tok == EOS || step + 1 == params.max_new_tokens {
            break;
        }
        let ctx = StepContext::decode(cache.len(), prompt_len, step, overrides.clone());
        let out = forward_cached(model, &[tok], &mut cache, hooks, &ctx)?;
        logits = out.logits.row(0).to_vec();
    }
    Ok(generated)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gen_params_invariants() {
        assert!(GenParams::greedy(0).is_err());
        assert!(GenParams::sampled(4, 0.0, 1).is_err());
        assert!(GenParams::sampled(4, 0.7, 1).is_ok());
        let p: std::result::Result<GenParams, _> = serde_json::from_str(r#"{"max_new_tokens":0}"#);
        assert!(p.is_err());
        let p: GenParams = serde_json::from_str(r#"{"max_new_tokens":3}"#).unwrap();
        assert_eq!(p, GenParams::greedy(3).unwrap());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[f32::NAN, -1.0]), 1);
    }

    #[test]
    fn log_softmax_handles_infinities() {
        let lp = log_softmax(&[0.0, f32::INFINITY, 1.0]);
        assert_eq!(lp[1], 0.0);
        assert_eq!(lp[0], f64::NEG_INFINITY);
        let lp = log_softmax(&[0.0, 0.0]);
        assert!((lp[0] - 0.5f64.ln()).abs() < 1e-12);
        let lp = log_softmax(&[f32::NEG_INFINITY, 0.0]);
        assert_eq!(lp[0], f64::NEG_INFINITY);
        assert_eq!(lp[1], 0.0);
    }

    #[test]
    fn sample_respects_masking() {
        let mut rng = Rng::new(1);
        for _ in 0..200 {
            let t = sample(&[f32::NEG_INFINITY, 0.0, 0.0], 1.0, &mut rng);
            assert_ne!(t, 0);
        }
        assert_eq!(sample(&[0.0, f32::INFINITY], 1.0, &mut rng), 1);
    }
}
