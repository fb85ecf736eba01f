// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::control::StateControl;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::runtime::{Hook, HookSite, Model};
use crate::state::{
    estimate_mean_difference, AdditiveTransform, ContrastivePairs, EstimatorMethod, Gate, TokenScope,
    VectorTrainSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaaParams {
    pub layer_id: usize,
    /// Signed steering strength.
    pub multiplier: f32,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub token_scope: TokenScope,
    #[serde(default)]
    pub train_spec: VectorTrainSpec,
}

/// Contrastive activation addition.
#[derive(Debug, Clone)]
pub struct Caa {
    name: String,
    params: CaaParams,
    pairs: ContrastivePairs,
    vector: Option<Tensor>,
    transform: Option<AdditiveTransform>,
}

impl Caa {
    pub fn new(name: impl Into<String>, params: CaaParams, pairs: ContrastivePairs) -> Result<Self> {
        if params.train_spec.method != EstimatorMethod::MeanDiff {
            return Err(Error::Config(format!(
                "CAA estimates with mean_diff, not {:?}",
                params.train_spec.method
            )));
        }
        Ok(Self {
            name: name.into(),
            params,
            pairs,
            vector: None,
            transform: None,
        })
    }

    pub fn params(&self) -> &CaaParams {
        &self.params
    }

    /// The estimated steering vector, once steered.
    pub fn vector(&self) -> Option<&Tensor> {
        self.vector.as_ref()
    }
}

impl StateControl for Caa {
    fn name(&self) -> &str {
        &self.name
    }

    fn steer(&mut self, model: &Model) -> Result<()> {
        let p = &self.params;
        let v = estimate_mean_difference(model, &self.pairs, p.layer_id, p.train_spec.accumulate)?;
        self.transform = Some(AdditiveTransform::new(
            &v,
            p.multiplier,
            p.normalize,
            p.token_scope,
            Gate::AlwaysOpen,
        )?);
        self.vector = Some(v);
        Ok(())
    }

    fn hooks(&self) -> Vec<Hook> {
        let Some(t) = self.transform.clone() else {
            return Vec::new();
        };
        vec![Hook::new(
            HookSite::ResidualPost(self.params.layer_id),
            format!("{}.add", self.name),
            move |ctx, h| t.apply(ctx, h),
        )]
    }
}
