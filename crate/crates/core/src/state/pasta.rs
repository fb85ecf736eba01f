// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::StateControl;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::runtime::{Hook, HookSite, Model, ParamMap, StepContext, PROMPT_OFFSET};

/// Key under which [`Pasta::prepare`] stores the resolved span positions.
pub const SPAN_POSITIONS_KEY: &str = "span_positions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePosition {
    /// Scale keys inside the spans.
    #[default]
    Include,
    /// Scale keys outside the spans.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PastaParams {
    /// Global head indices, `layer * n_heads + head`.
    pub head_config: Vec<usize>,
    #[serde(default)]
    pub scale_position: ScalePosition,
    pub alpha: f32,
    /// Used when no `substrings` override is supplied.
    #[serde(default)]
    pub substrings: Vec<String>,
}

/// Rescales the attention of `heads` (indices into the first axis of a
/// `[n_heads, n, t]` tensor) toward or away from the keys in `span`, then
/// renormalizes each touched row.
pub fn pasta_rescale(
    attn: &Tensor,
    heads: &[usize],
    span: &[usize],
    alpha: f32,
    scale_position: ScalePosition,
) -> Result<Tensor> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive and finite, got {alpha}")));
    }
    if attn.rank() != 3 {
        return Err(Error::Dimension(format!("attention must be rank 3, got {:?}", attn.shape())));
    }
    if let Some(h) = heads.iter().find(|&&h| h >= attn.shape()[0]) {
        return Err(Error::Selection(format!("head {h} out of range for {:?}", attn.shape())));
    }
    let mut out = attn.clone();
    rescale_in_place(&mut out, heads, &span_mask(span, attn.shape()[2]), alpha, scale_position);
    Ok(out)
}

fn span_mask(span: &[usize], t: usize) -> Vec<bool> {
    let mut mask = vec![false; t];
    for &p in span {
        if p < t {
            mask[p] = true;
        }
    }
    mask
}

fn rescale_in_place(attn: &mut Tensor, heads: &[usize], in_span: &[bool], alpha: f32, pos: ScalePosition) {
    if alpha == 1.0 {
        return;
    }
    let (n, t) = (attn.shape()[1], attn.shape()[2]);
    let target = pos == ScalePosition::Include;
    let data = attn.data_mut();
    for &h in heads {
        for r in 0..n {
            let row = &mut data[(h * n + r) * t..(h * n + r + 1) * t];
            let touched = row.iter().zip(in_span).any(|(&a, &s)| s == target && a > 0.0);
            if !touched {
                continue;
            }
            let mut sum = 0.0f64;
            for (a, &s) in row.iter_mut().zip(in_span) {
                if s == target {
                    *a *= alpha;
                }
                sum += f64::from(*a);
            }
            for a in row.iter_mut() {
                *a = (f64::from(*a) / sum) as f32;
            }
        }
    }
}

/// Token positions (BOS-offset) covered by every non-overlapping occurrence
/// of each substring in `prompt`, sorted and deduplicated.
pub fn resolve_spans(prompt: &str, substrings: &[String]) -> Vec<usize> {
    let mut positions: Vec<usize> = substrings
        .iter()
        .filter(|s| !s.is_empty())
        .flat_map(|s| {
            prompt
                .match_indices(s.as_str())
                .flat_map(|(b, m)| PROMPT_OFFSET + b..PROMPT_OFFSET + b + m.len())
        })
        .collect();
    positions.sort_unstable();
    positions.dedup();
    positions
}

fn substrings_from(value: &Value) -> Result<Vec<String>> {
    match value {
        Value::String(s) => Ok(vec![s.clone()]),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Override(format!("substring entries must be strings, got {v}")))
            })
            .collect(),
        other => Err(Error::Override(format!("substrings must be a string or list, got {other}"))),
    }
}

/// Post-hoc attention steering toward prompt spans.
#[derive(Debug, Clone)]
pub struct Pasta {
    name: String,
    params: PastaParams,
    by_layer: BTreeMap<usize, Vec<usize>>,
}

impl Pasta {
    pub fn new(name: impl Into<String>, params: PastaParams) -> Result<Self> {
        if !(params.alpha > 0.0 && params.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive and finite, got {}", params.alpha)));
        }
        Ok(Self {
            name: name.into(),
            params,
            by_layer: BTreeMap::new(),
        })
    }

    pub fn params(&self) -> &PastaParams {
        &self.params
    }
}

impl StateControl for Pasta {
    fn name(&self) -> &str {
        &self.name
    }

    fn steer(&mut self, model: &Model) -> Result<()> {
        let cfg = model.config();
        self.by_layer.clear();
        for &g in &self.params.head_config {
            if g >= cfg.total_heads() {
                return Err(Error::Selection(format!(
                    "head index {g} out of range: the model has {} heads ({} layers x {})",
                    cfg.total_heads(),
                    cfg.n_layers,
                    cfg.n_heads
                )));
            }
            let heads = self.by_layer.entry(g / cfg.n_heads).or_default();
            if !heads.contains(&(g % cfg.n_heads)) {
                heads.push(g % cfg.n_heads);
            }
        }
        Ok(())
    }

    fn hooks(&self) -> Vec<Hook> {
        self.by_layer
            .iter()
            .map(|(&layer, heads)| {
                let heads = heads.clone();
                let name = self.name.clone();
                let alpha = self.params.alpha;
                let pos = self.params.scale_position;
                Hook::new(HookSite::AttnWeights(layer), format!("{name}.attn"), move |ctx: &StepContext, mut attn| {
                    let Some(span) = ctx
                        .overrides_for(&name)
                        .and_then(|o| o.get(SPAN_POSITIONS_KEY))
                        .and_then(Value::as_array)
                    else {
                        return attn;
                    };
                    let t = attn.shape()[2];
                    let mut mask = vec![false; t];
                    for p in span.iter().filter_map(Value::as_u64) {
                        if let Some(m) = mask.get_mut(p as usize) {
                            *m = true;
                        }
                    }
                    rescale_in_place(&mut attn, &heads, &mask, alpha, pos);
                    attn
                })
            })
            .collect()
    }

    fn prepare(&self, adapted_prompt: &str, overrides: &ParamMap) -> Result<ParamMap> {
        let mut out = overrides.clone();
        let substrings = match overrides.get("substrings") {
            Some(v) => substrings_from(v)?,
            None => self.params.substrings.clone(),
        };
        let span = resolve_spans(adapted_prompt, &substrings);
        if span.is_empty() && self.params.scale_position == ScalePosition::Include {
            return Err(Error::SpanResolution(if substrings.is_empty() {
                "no substrings to emphasize".to_owned()
            } else {
                format!("none of {substrings:?} occur in the prompt")
            }));
        }
        out.insert(SPAN_POSITIONS_KEY.to_owned(), Value::from(span));
        Ok(out)
    }
}
