// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation and attention steering.
//!
//! Each method is assembled from four parts: an estimator that learns a
//! [`SteeringArtifact`], a selector that picks where to intervene, a
//! transform applied by a hook, and a [`Gate`] deciding when it fires.
//!
//! | method | estimator | selector | transform |
//! |--------|-----------|----------|-----------|
//! | [`Caa`] | [`estimate_mean_difference`] | fixed layer | [`AdditiveTransform`] |
//! | [`ActAdd`] | [`estimate_single_pair`] | fixed layer | [`PositionalAdditiveTransform`] |
//! | [`Iti`] | [`train_head_probes`] | [`select_topk_heads`] | [`HeadAdditiveTransform`] |
//! | [`Pasta`] | none | `head_config` | [`pasta_rescale`] |

mod actadd;
mod caa;
mod estimators;
mod iti;
mod pasta;
mod probes;
mod transforms;

pub use actadd::{ActAdd, ActAddParams};
pub use caa::{Caa, CaaParams};
pub use estimators::{
    estimate_mean_difference, estimate_single_pair, load_pairs, ContrastivePair, ContrastivePairs,
};
pub use iti::{load_labeled_prompts, Iti, ItiParams};
pub use pasta::{pasta_rescale, resolve_spans, Pasta, PastaParams, ScalePosition, SPAN_POSITIONS_KEY};
pub use probes::{
    collect_head_activations, select_topk_heads, train_head_probes, train_probes_on_activations,
    HeadActivations, LabeledPrompt,
    ProbeRecord, ProbeTable, PROBE_EPOCHS, PROBE_LR,
};
pub use transforms::{
    additive_transform, AdditiveTransform, Gate, HeadAdditiveTransform, HeadShift,
    PositionalAdditiveTransform, TokenScope,
};

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    MeanDiff,
    SinglePair,
    ProbeMassShift,
}

/// Which activations an estimator reads for each example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accumulate {
    #[default]
    LastToken,
    MeanOverTokens,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorTrainSpec {
    pub method: EstimatorMethod,
    #[serde(default)]
    pub accumulate: Accumulate,
}

impl Default for VectorTrainSpec {
    fn default() -> Self {
        Self {
            method: EstimatorMethod::MeanDiff,
            accumulate: Accumulate::LastToken,
        }
    }
}

/// What an estimator learns.
#[derive(Debug, Clone, PartialEq)]
pub enum SteeringArtifact {
    /// `[d_model]`
    Vector(Tensor),
    /// `[m, d_model]`, one row per prompt position.
    Positional(Tensor),
    Heads(Vec<ProbeRecord>),
}
