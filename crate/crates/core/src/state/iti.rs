// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::StateControl;
use crate::error::{Error, Result};
use crate::runtime::{Hook, HookSite, Model};
use crate::state::{
    select_topk_heads, train_head_probes, Gate, HeadAdditiveTransform, HeadShift, LabeledPrompt,
    ProbeRecord, TokenScope,
};

/// Reads `{"prompt", "label"}` JSON lines.
pub fn load_labeled_prompts(path: &Path) -> Result<Vec<LabeledPrompt>> {
    crate::jsonl::read_jsonl(path)
}

fn default_val_fraction() -> f64 {
    0.5
}

fn default_scope() -> TokenScope {
    TokenScope::All
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItiParams {
    /// Number of heads to intervene on.
    pub num_heads: usize,
    /// Shift strength in units of each head's sigma.
    pub multiplier: f32,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_scope")]
    pub token_scope: TokenScope,
}

/// Inference-time intervention on probe-selected attention heads.
#[derive(Debug, Clone)]
pub struct Iti {
    name: String,
    params: ItiParams,
    data: Vec<LabeledPrompt>,
    selected: Vec<ProbeRecord>,
}

impl Iti {
    pub fn new(name: impl Into<String>, params: ItiParams, data: Vec<LabeledPrompt>) -> Result<Self> {
        if params.num_heads == 0 {
            return Err(Error::Selection("num_heads must be at least 1".into()));
        }
        Ok(Self {
            name: name.into(),
            params,
            data,
            selected: Vec::new(),
        })
    }

    pub fn params(&self) -> &ItiParams {
        &self.params
    }

    /// Probe records of the selected heads, in selection order.
    pub fn selected(&self) -> &[ProbeRecord] {
        &self.selected
    }
}

impl StateControl for Iti {
    fn name(&self) -> &str {
        &self.name
    }

    fn steer(&mut self, model: &Model) -> Result<()> {
        let table = train_head_probes(model, &self.data, self.params.val_fraction, self.params.seed)?;
        let heads = select_topk_heads(&table, self.params.num_heads)?;
        self.selected = heads.into_iter().map(|(l, h)| table.get(l, h).clone()).collect();
        Ok(())
    }

    fn hooks(&self) -> Vec<Hook> {
        let mut by_layer: BTreeMap<usize, Vec<HeadShift>> = BTreeMap::new();
        for r in &self.selected {
            let scale = self.params.multiplier * r.sigma;
            by_layer.entry(r.layer).or_default().push(HeadShift {
                head: r.head,
                shift: r.direction.data().iter().map(|d| d * scale).collect(),
            });
        }
        by_layer
            .into_iter()
            .map(|(layer, shifts)| {
                let t = HeadAdditiveTransform::new(shifts, self.params.token_scope, Gate::AlwaysOpen);
                Hook::new(HookSite::HeadOut(layer), format!("{}.heads", self.name), move |ctx, h| {
                    t.apply(ctx, h)
                })
            })
            .collect()
    }
}
