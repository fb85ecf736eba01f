// SPDX-License-Identifier: MIT OR Apache-2.0

//! The four control surfaces and their composition.
//!
//! | surface    | acts on                | provides              |
//! |------------|------------------------|-----------------------|
//! | input      | the prompt             | [`InputControl::adapt`] |
//! | structural | the weights            | [`StructuralControl::apply_to_weights`] |
//! | state      | activations, attention | [`StateControl::hooks`] |
//! | output     | decoding               | [`OutputControl::generate`] |

mod overrides;
mod pipeline;
pub mod registry;
mod spec;

use std::sync::Arc;

pub use overrides::{OverrideValue, RuntimeOverrides};
pub use pipeline::{ModelSource, PipelineOutput, SteeringPipeline};
pub use spec::{expand_control_spec, ControlSpec, DeriveFn, VarMode};
pub use registry::{build_control, ControlEntry, PipelineConfig, CONTROL_CLASSES};

use crate::error::Result;
use crate::runtime::{GenParams, Hook, Model, ParamMap, ResolvedOverrides, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControlKind {
    Input,
    Structural,
    State,
    Output,
}

/// Prompt adapter `σ`.
pub trait InputControl: Send + Sync {
    fn name(&self) -> &str;

    /// Setup run by the pipeline's `steer`, e.g. pool validation.
    fn steer(&mut self) -> Result<()> {
        Ok(())
    }

    fn adapt(&self, prompt: &str) -> Result<String>;
}

/// Produces modified weights `θ′` on the pipeline's private copy.
pub trait StructuralControl: Send + Sync {
    fn name(&self) -> &str;

    fn apply_to_weights(&mut self, weights: &mut Weights) -> Result<()>;
}

/// Hooks into the forward pass.
pub trait StateControl: Send + Sync {
    fn name(&self) -> &str;

    /// Fits whatever artifact the hooks need.
    fn steer(&mut self, model: &Model) -> Result<()>;

    /// Only meaningful after `steer`.
    fn hooks(&self) -> Vec<Hook>;

    /// Turns this control's resolved runtime overrides into the values its
    /// hooks read from the step context.
    fn prepare(&self, _adapted_prompt: &str, overrides: &ParamMap) -> Result<ParamMap> {
        Ok(overrides.clone())
    }
}

/// Decoding strategy `d`.
pub trait OutputControl: Send + Sync {
    fn name(&self) -> &str;

    fn steer(&mut self, _model: &Model) -> Result<()> {
        Ok(())
    }

    fn prepare(&self, _adapted_prompt: &str, overrides: &ParamMap) -> Result<ParamMap> {
        Ok(overrides.clone())
    }

    /// Returns only the new tokens.
    fn generate(
        &self,
        model: &Model,
        prompt_ids: &[u32],
        params: &GenParams,
        hooks: &[Hook],
        overrides: &Arc<ResolvedOverrides>,
    ) -> Result<Vec<u32>>;
}

/// A steering method bound to one surface.
pub enum Control {
    Input(Box<dyn InputControl>),
    Structural(Box<dyn StructuralControl>),
    State(Box<dyn StateControl>),
    Output(Box<dyn OutputControl>),
}

impl Control {
    pub fn kind(&self) -> ControlKind {
        match self {
            Self::Input(_) => ControlKind::Input,
            Self::Structural(_) => ControlKind::Structural,
            Self::State(_) => ControlKind::State,
            Self::Output(_) => ControlKind::Output,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::Input(c) => c.name(),
            Self::Structural(c) => c.name(),
            Self::State(c) => c.name(),
            Self::Output(c) => c.name(),
        }
    }

    pub fn input(c: impl InputControl + 'static) -> Self {
        Self::Input(Box::new(c))
    }

    pub fn structural(c: impl StructuralControl + 'static) -> Self {
        Self::Structural(Box::new(c))
    }

    pub fn state(c: impl StateControl + 'static) -> Self {
        Self::State(Box::new(c))
    }

    pub fn output(c: impl OutputControl + 'static) -> Self {
        Self::Output(Box::new(c))
    }
}

impl std::fmt::Debug for Control {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Control::{:?}({})", self.kind(), self.name())
    }
}
