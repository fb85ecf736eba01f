// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::control::StateControl;
use crate::error::Result;
use crate::numerics::Tensor;
use crate::runtime::{Hook, HookSite, Model};
use crate::state::{estimate_single_pair, Gate, PositionalAdditiveTransform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActAddParams {
    pub positive: String,
    pub negative: String,
    pub layer_id: usize,
    pub multiplier: f32,
}

/// Activation addition from a single prompt pair, injected during prefill.
#[derive(Debug, Clone)]
pub struct ActAdd {
    name: String,
    params: ActAddParams,
    sequence: Option<Tensor>,
}

impl ActAdd {
    pub fn new(name: impl Into<String>, params: ActAddParams) -> Self {
        Self {
            name: name.into(),
            params,
            sequence: None,
        }
    }

    pub fn params(&self) -> &ActAddParams {
        &self.params
    }

    /// `[m, d_model]` per-position differences, once steered.
    pub fn sequence(&self) -> Option<&Tensor> {
        self.sequence.as_ref()
    }
}

impl StateControl for ActAdd {
    fn name(&self) -> &str {
        &self.name
    }

    fn steer(&mut self, model: &Model) -> Result<()> {
        let p = &self.params;
        self.sequence = Some(estimate_single_pair(model, &p.positive, &p.negative, p.layer_id)?);
        Ok(())
    }

    fn hooks(&self) -> Vec<Hook> {
        let Some(seq) = self.sequence.clone() else {
            return Vec::new();
        };
        let t = PositionalAdditiveTransform::new(seq, self.params.multiplier, Gate::AlwaysOpen);
        vec![Hook::new(
            HookSite::ResidualPost(self.params.layer_id),
            format!("{}.add", self.name),
            move |ctx, h| t.apply(ctx, h),
        )]
    }
}
