// SPDX-License-Identifier: MIT OR Apache-2.0

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::control::OutputControl;
use crate::error::{Error, Result};
use crate::output::Reward;
use crate::runtime::{
    argmax, detokenize, forward_cached, log_softmax, GenParams, Hook, KvCache, Model, ParamMap,
    ResolvedOverrides, StepContext, EOS,
};

fn default_rounds() -> usize {
    64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookaheadParams {
    /// Beams kept after each round (`k`).
    pub beam_width: usize,
    /// Next tokens tried per beam (`b`).
    pub expansions_per_beam: usize,
    /// Tokens added per candidate per round (`l`).
    pub lookahead_len: usize,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
}

impl LookaheadParams {
    pub fn new(beam_width: usize, expansions_per_beam: usize, lookahead_len: usize, max_rounds: usize) -> Result<Self> {
        let p = Self {
            beam_width,
            expansions_per_beam,
            lookahead_len,
            max_rounds,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("beam_width", self.beam_width),
            ("expansions_per_beam", self.expansions_per_beam),
            ("lookahead_len", self.lookahead_len),
            ("max_rounds", self.max_rounds),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Config(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
struct Beam {
    tokens: Vec<u32>,
    cache: KvCache,
    next_logits: Vec<f32>,
    logprob: f64,
    reward: f64,
    done: bool,
}

/// Token ids by descending logit, lowest id first among equals.
fn top_tokens(logits: &[f32], b: usize) -> Vec<u32> {
    let key = |v: f32| if v.is_nan() { f32::NEG_INFINITY } else { v };
    let mut ids: Vec<u32> = (0..logits.len() as u32).collect();
    ids.sort_by(|&x, &y| key(logits[y as usize]).total_cmp(&key(logits[x as usize])).then(x.cmp(&y)));
    ids.truncate(b);
    ids
}

fn rank(a: &Beam, b: &Beam) -> Ordering {
    let key = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    key(b.reward)
        .total_cmp(&key(a.reward))
        .then(key(b.logprob).total_cmp(&key(a.logprob)))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

struct Search<'a> {
    model: &'a Model,
    prompt_len: usize,
    prompt_text: String,
    gen: &'a GenParams,
    hooks: &'a [Hook],
    overrides: &'a Arc<ResolvedOverrides>,
    reward: &'a Reward,
    reward_args: &'a ParamMap,
}

impl Search<'_> {
    fn finished(&self, beam: &Beam, tok: u32) -> bool {
        tok == EOS
            || beam.tokens.len() >= self.gen.max_new_tokens()
            || self.prompt_len + beam.tokens.len() >= self.model.config().max_seq
    }

    /// Appends `tok`; runs it through the model unless the beam is done.
    fn push(&self, beam: &mut Beam, tok: u32) -> Result<()> {
        beam.logprob += log_softmax(&beam.next_logits)[tok as usize];
        beam.tokens.push(tok);
        if self.finished(beam, tok) {
            beam.done = true;
            return Ok(());
        }
        let ctx = StepContext::decode(
            beam.cache.len(),
            self.prompt_len,
            beam.tokens.len() - 1,
            self.overrides.clone(),
        );
        let out = forward_cached(self.model, &[tok], &mut beam.cache, self.hooks, &ctx)?;
        beam.next_logits = out.logits.row(0).to_vec();
        Ok(())
    }

    fn expand(&self, beam: &Beam, first: u32, lookahead: usize) -> Result<Beam> {
        let mut cand = beam.clone();
        self.push(&mut cand, first)?;
        for _ in 1..lookahead {
            if cand.done {
                break;
            }
            let tok = argmax(&cand.next_logits);
            self.push(&mut cand, tok)?;
        }
        let text = detokenize(&cand.tokens)?;
        cand.reward = self.reward.score(&self.prompt_text, &text, self.reward_args)?;
        Ok(cand)
    }
}

/// Reward-guided lookahead search.
///
/// Each round every live beam proposes its `b` most likely next tokens,
/// each extended greedily to `l` tokens, and the `k` best candidates by
/// (reward, total log-probability, token order) survive. Finished beams
/// carry over unchanged. Returns the new tokens of the best beam.
#[allow(clippy::too_many_arguments)]
pub fn deal_generate(
    model: &Model,
    prompt_ids: &[u32],
    reward: &Reward,
    params: &LookaheadParams,
    gen: &GenParams,
    hooks: &[Hook],
    overrides: &Arc<ResolvedOverrides>,
    reward_args: &ParamMap,
) -> Result<Vec<u32>> {
    params.validate()?;
    if prompt_ids.is_empty() {
        return Err(Error::Length("generation needs a nonempty prompt".into()));
    }
    let search = Search {
        model,
        prompt_len: prompt_ids.len(),
        prompt_text: detokenize(prompt_ids)?,
        gen,
        hooks,
        overrides,
        reward,
        reward_args,
    };
    let mut cache = KvCache::new(model.config());
    let ctx = StepContext::prefill(prompt_ids.len(), overrides.clone());
    let out = forward_cached(model, prompt_ids, &mut cache, hooks, &ctx)?;
    let mut beams = vec![Beam {
        tokens: Vec::new(),
        cache,
        next_logits: out.logits.row(prompt_ids.len() - 1).to_vec(),
        logprob: 0.0,
        reward: f64::NEG_INFINITY,
        done: prompt_ids.len() >= model.config().max_seq,
    }];
    for _ in 0..params.max_rounds {
        if beams.iter().all(|b| b.done) {
            break;
        }
        let mut candidates = Vec::with_capacity(beams.len() * params.expansions_per_beam);
        for beam in &beams {
            if beam.done {
                candidates.push(beam.clone());
                continue;
            }
            for tok in top_tokens(&beam.next_logits, params.expansions_per_beam) {
                candidates.push(search.expand(beam, tok, params.lookahead_len)?);
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(params.beam_width);
        beams = candidates;
    }
    Ok(beams.swap_remove(0).tokens)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DealParams {
    pub beam_width: usize,
    pub expansions_per_beam: usize,
    pub lookahead_len: usize,
    #[serde(default = "default_rounds")]
    pub max_rounds: usize,
    pub reward: Reward,
}

impl DealParams {
    pub fn search(&self) -> LookaheadParams {
        LookaheadParams {
            beam_width: self.beam_width,
            expansions_per_beam: self.expansions_per_beam,
            lookahead_len: self.lookahead_len,
            max_rounds: self.max_rounds,
        }
    }
}

/// Lookahead decoding as an output control. Its runtime overrides are
/// handed to the reward.
#[derive(Debug, Clone)]
pub struct Deal {
    name: String,
    params: DealParams,
    search: LookaheadParams,
}

impl Deal {
    pub fn new(name: impl Into<String>, params: DealParams) -> Result<Self> {
        let search = params.search();
        search.validate()?;
        Ok(Self {
            name: name.into(),
            params,
            search,
        })
    }
}

impl OutputControl for Deal {
    fn name(&self) -> &str {
        &self.name
    }

    fn prepare(&self, _adapted_prompt: &str, overrides: &ParamMap) -> Result<ParamMap> {
        self.params.reward.check_overrides(overrides)?;
        Ok(overrides.clone())
    }

    fn generate(
        &self,
        model: &Model,
        prompt_ids: &[u32],
        params: &GenParams,
        hooks: &[Hook],
        overrides: &Arc<ResolvedOverrides>,
    ) -> Result<Vec<u32>> {
        let empty = ParamMap::new();
        let args = overrides.get(&self.name).unwrap_or(&empty);
        deal_generate(model, prompt_ids, &self.params.reward, &self.search, params, hooks, overrides, args)
    }
}
