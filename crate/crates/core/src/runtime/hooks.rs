// SPDX-License-Identifier: MIT OR Apache-2.0

//! Hook bus: the points in a forward pass where state controls intervene.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use serde_json::Value;

use crate::numerics::Tensor;

/// Parameter map keyed by field name.
pub type ParamMap = BTreeMap<String, Value>;

/// Inference-time values per control name, resolved before generation.
pub type ResolvedOverrides = BTreeMap<String, ParamMap>;

/// Location in the forward pass.
///
/// Tensor shapes delivered to hooks, for `n` tokens in the pass and `t`
/// cached-plus-new keys:
///
/// - `ResidualPre(l)` / `ResidualPost(l)`: `[n, d_model]`
/// - `AttnWeights(l)`: `[n_heads, n, t]`, post-softmax, key index = absolute position
/// - `HeadOut(l)`: `[n, n_heads, d_head]`, before the output projection
/// - `Logits`: `[n, vocab]`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HookSite {
    ResidualPre(usize),
    ResidualPost(usize),
    AttnWeights(usize),
    HeadOut(usize),
    Logits,
}

impl HookSite {
    pub fn layer(&self) -> Option<usize> {
        match *self {
            Self::ResidualPre(l) | Self::ResidualPost(l) | Self::AttnWeights(l) | Self::HeadOut(l) => {
                Some(l)
            }
            Self::Logits => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Prefill,
    Decode,
}

/// Per-forward-pass information visible to hooks.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub phase: Phase,
    /// Absolute positions of the tokens in this pass.
    pub positions: Range<usize>,
    /// Tokens in the (adapted, BOS-prefixed) prompt.
    pub prompt_len: usize,
    /// Decode step counter; zero during prefill.
    pub step_index: usize,
    pub overrides: Arc<ResolvedOverrides>,
}

impl StepContext {
    pub fn prefill(prompt_len: usize, overrides: Arc<ResolvedOverrides>) -> Self {
        Self {
            phase: Phase::Prefill,
            positions: 0..prompt_len,
            prompt_len,
            step_index: 0,
            overrides,
        }
    }

    pub fn decode(
        position: usize,
        prompt_len: usize,
        step_index: usize,
        overrides: Arc<ResolvedOverrides>,
    ) -> Self {
        Self {
            phase: Phase::Decode,
            positions: position..position + 1,
            prompt_len,
            step_index,
            overrides,
        }
    }

    /// Prefill context for scoring a whole sequence with no overrides.
    pub fn standalone(len: usize) -> Self {
        Self::prefill(len, Arc::default())
    }

    pub fn overrides_for(&self, control: &str) -> Option<&ParamMap> {
        self.overrides.get(control)
    }
}

pub type HookFn = dyn Fn(&StepContext, Tensor) -> Tensor + Send + Sync;

/// A transform applied to the in-flight tensor at one site.
#[derive(Clone)]
pub struct Hook {
    pub site: HookSite,
    pub label: String,
    transform: Arc<HookFn>,
}

impl Hook {
    pub fn new(
        site: HookSite,
        label: impl Into<String>,
        transform: impl Fn(&StepContext, Tensor) -> Tensor + Send + Sync + 'static,
    ) -> Self {
        Self {
            site,
            label: label.into(),
            transform: Arc::new(transform),
        }
    }

    pub fn identity(site: HookSite) -> Self {
        Self::new(site, "identity", |_, t| t)
    }

    pub fn apply(&self, ctx: &StepContext, value: Tensor) -> Tensor {
        (self.transform)(ctx, value)
    }
}

impl fmt::Debug for Hook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hook")
            .field("site", &self.site)
            .field("label", &self.label)
            .finish_non_exhaustive()
    }
}
