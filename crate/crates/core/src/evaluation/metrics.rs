// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::checkers::check_instruction;
use crate::evaluation::{DataPoint, Generation};
use crate::runtime::{encode_prompt, forward, log_softmax, tokenize, Model, StepContext};

/// Scores for one named series, one per generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricResult {
    pub fn new(metric: impl Into<String>, scores: Vec<f64>) -> Self {
        let n = scores.len() as f64;
        let (mean, std) = if scores.is_empty() {
            (0.0, 0.0)
        } else {
            let mean = scores.iter().sum::<f64>() / n;
            let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        Self {
            metric: metric.into(),
            scores,
            mean,
            std,
        }
    }
}

pub trait Metric: Send + Sync {
    fn name(&self) -> &str;

    /// Names of the series [`Metric::score`] returns, in order.
    fn series(&self) -> Vec<String> {
        vec![self.name().to_owned()]
    }

    fn score(&self, generations: &[Generation], data: &[DataPoint]) -> Result<Vec<MetricResult>>;
}

fn join<'a>(generations: &'a [Generation], data: &'a [DataPoint]) -> Result<Vec<(&'a Generation, &'a DataPoint)>> {
    let index: HashMap<&str, &DataPoint> = data.iter().map(|d| (d.id.as_str(), d)).collect();
    generations
        .iter()
        .map(|g| {
            index
                .get(g.datapoint_id.as_str())
                .map(|d| (g, *d))
                .ok_or_else(|| Error::Join(g.datapoint_id.clone()))
        })
        .collect()
}

pub const STRICT_PROMPT_LEVEL: &str = "StrictInstruction.prompt_level";
pub const STRICT_INSTRUCTION_LEVEL: &str = "StrictInstruction.instruction_level";

/// Per generation: fraction of instructions followed, and whether all were.
#[derive(Debug, Clone, Default)]
pub struct StrictInstruction;

impl StrictInstruction {
    /// `(fraction passed, all passed)` for one response.
    pub fn score_one(dp: &DataPoint, response: &str) -> Result<(f64, bool)> {
        let mut passed = 0;
        for (checker, kwargs) in dp.instruction_id_list.iter().zip(&dp.kwargs) {
            if check_instruction(checker, kwargs, response)? {
                passed += 1;
            }
        }
        let total = dp.instruction_id_list.len();
        if total == 0 {
            return Ok((1.0, true));
        }
        Ok((passed as f64 / total as f64, passed == total))
    }
}

impl Metric for StrictInstruction {
    fn name(&self) -> &str {
        "StrictInstruction"
    }

    fn series(&self) -> Vec<String> {
        vec![STRICT_PROMPT_LEVEL.to_owned(), STRICT_INSTRUCTION_LEVEL.to_owned()]
    }

    fn score(&self, generations: &[Generation], data: &[DataPoint]) -> Result<Vec<MetricResult>> {
        let mut prompt_level = Vec::with_capacity(generations.len());
        let mut instruction_level = Vec::with_capacity(generations.len());
        for (g, dp) in join(generations, data)? {
            let (fraction, strict) = Self::score_one(dp, &g.response)?;
            prompt_level.push(if strict { 1.0 } else { 0.0 });
            instruction_level.push(fraction);
        }
        Ok(vec![
            MetricResult::new(STRICT_PROMPT_LEVEL, prompt_level),
            MetricResult::new(STRICT_INSTRUCTION_LEVEL, instruction_level),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTransform {
    #[default]
    Identity,
    Sigmoid,
}

impl ScoreTransform {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Self::Identity => x,
            Self::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }
}

/// Log-probability of each response token given the prompt and the
/// response tokens before it.
pub fn response_logprobs(model: &Model, prompt_ids: &[u32], response_ids: &[u32]) -> Result<Vec<f64>> {
    if prompt_ids.is_empty() || response_ids.is_empty() {
        return Err(Error::EmptyData("scoring needs a nonempty prompt and response".into()));
    }
    let ids: Vec<u32> = prompt_ids.iter().chain(response_ids).copied().collect();
    if ids.len() > model.config().max_seq {
        return Err(Error::Length(format!(
            "prompt plus response is {} tokens, max_seq is {}",
            ids.len(),
            model.config().max_seq
        )));
    }
    let out = forward(model, &ids, &[], &StepContext::standalone(ids.len()))?;
    let p = prompt_ids.len();
    Ok(response_ids
        .iter()
        .enumerate()
        .map(|(i, &t)| log_softmax(out.logits.row(p - 1 + i))[t as usize])
        .collect())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean per-token log-probability of `response_ids`, then `transform`.
pub fn loglik_reward_ids(
    model: &Model,
    prompt_ids: &[u32],
    response_ids: &[u32],
    transform: ScoreTransform,
) -> Result<f64> {
    Ok(transform.apply(mean(&response_logprobs(model, prompt_ids, response_ids)?)))
}

/// Length-normalized log-likelihood of `response` after `prompt`.
pub fn loglik_reward(model: &Model, prompt: &str, response: &str, transform: ScoreTransform) -> Result<f64> {
    if response.is_empty() {
        return Err(Error::EmptyData("response is empty".into()));
    }
    loglik_reward_ids(model, &encode_prompt(prompt), &tokenize(response), transform)
}

/// `exp` of the mean negative log-likelihood of every token after the first
/// (the text is BOS-prefixed).
pub fn perplexity(model: &Model, text: &str) -> Result<f64> {
    let ids = encode_prompt(text);
    if ids.len() < 2 {
        return Err(Error::Length("perplexity needs at least 2 tokens".into()));
    }
    let lp = response_logprobs(model, &ids[..1], &ids[1..])?;
    Ok((-mean(&lp)).exp())
}

/// Response quality under a scorer; the built-in scorer is the base
/// model's length-normalized log-likelihood.
#[derive(Debug, Clone)]
pub struct RewardScore {
    model: Arc<Model>,
    transform: ScoreTransform,
}

impl RewardScore {
    pub fn new(model: Arc<Model>, transform: ScoreTransform) -> Self {
        Self { model, transform }
    }
}

impl Metric for RewardScore {
    fn name(&self) -> &str {
        "RewardScore"
    }

    fn score(&self, generations: &[Generation], data: &[DataPoint]) -> Result<Vec<MetricResult>> {
        let scores = join(generations, data)?
            .into_iter()
            .map(|(g, dp)| loglik_reward_ids(&self.model, &encode_prompt(&dp.prompt), &g.response_ids, self.transform))
            .collect::<Result<_>>()?;
        Ok(vec![MetricResult::new(self.name(), scores)])
    }
}

/// Conditional perplexity of each response given its prompt.
#[derive(Debug, Clone)]
pub struct Perplexity {
    model: Arc<Model>,
}

impl Perplexity {
    pub fn new(model: Arc<Model>) -> Self {
        Self { model }
    }
}

impl Metric for Perplexity {
    fn name(&self) -> &str {
        "Perplexity"
    }

    fn score(&self, generations: &[Generation], data: &[DataPoint]) -> Result<Vec<MetricResult>> {
        let scores = join(generations, data)?
            .into_iter()
            .map(|(g, dp)| {
                let lp = response_logprobs(&self.model, &encode_prompt(&dp.prompt), &g.response_ids)?;
                Ok((-mean(&lp)).exp())
            })
            .collect::<Result<_>>()?;
        Ok(vec![MetricResult::new(self.name(), scores)])
    }
}
