// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use serde_json::Value;

use crate::control::{Control, ControlKind, RuntimeOverrides};
use crate::error::{Error, Result};
use crate::runtime::{
    default_generate, detokenize, encode_prompt, load_weights, GenParams, Hook, Model, ParamMap,
    ResolvedOverrides,
};

/// Where a pipeline gets its base model from.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Path(PathBuf),
    Model(Model),
}

impl From<Model> for ModelSource {
    fn from(m: Model) -> Self {
        Self::Model(m)
    }
}

impl From<&Model> for ModelSource {
    fn from(m: &Model) -> Self {
        Self::Model(m.clone())
    }
}

impl From<PathBuf> for ModelSource {
    fn from(p: PathBuf) -> Self {
        Self::Path(p)
    }
}

/// Result of one pipeline generation.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub adapted_prompt: String,
    /// New tokens only.
    pub ids: Vec<u32>,
    pub text: String,
}

/// An ordered composition of controls bound to a private model copy.
///
/// Controls are applied in list order on every surface. Hooks registered
/// at the same site run in registration order.
pub struct SteeringPipeline {
    model: Model,
    controls: Vec<Control>,
    hooks: Vec<Hook>,
    steered: bool,
}

impl std::fmt::Debug for SteeringPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SteeringPipeline")
            .field("controls", &self.controls)
            .field("hooks", &self.hooks)
            .field("steered", &self.steered)
            .finish_non_exhaustive()
    }
}

impl SteeringPipeline {
    pub fn new(source: impl Into<ModelSource>, controls: Vec<Control>) -> Result<Self> {
        let outputs = controls.iter().filter(|c| c.kind() == ControlKind::Output).count();
        if outputs > 1 {
            return Err(Error::Composition(format!(
                "a pipeline holds at most one output control, got {outputs}"
            )));
        }
        let mut seen = HashSet::new();
        for c in &controls {
            if !seen.insert(c.name().to_owned()) {
                return Err(Error::Composition(format!("duplicate control name `{}`", c.name())));
            }
        }
        let model = match source.into() {
            ModelSource::Model(m) => m,
            ModelSource::Path(p) => load_weights(&p)?,
        };
        Ok(Self {
            model,
            controls,
            hooks: Vec::new(),
            steered: false,
        })
    }

    /// Delegates to every control's setup in list order: structural edits
    /// land on the private weights, state controls fit their artifacts
    /// against the weights as edited so far and register hooks.
    pub fn steer(&mut self) -> Result<()> {
        if self.steered {
            return Err(Error::PipelineState("pipeline is already steered".into()));
        }
        for control in &mut self.controls {
            let name = control.name().to_owned();
            let step = match control {
                Control::Input(c) => c.steer(),
                Control::Structural(c) => self.model.edit_weights(|w| c.apply_to_weights(w)),
                Control::State(c) => c.steer(&self.model).map(|()| self.hooks.extend(c.hooks())),
                Control::Output(c) => c.steer(&self.model),
            };
            step.map_err(|e| e.in_control(&name))?;
        }
        self.steered = true;
        Ok(())
    }

    pub fn is_steered(&self) -> bool {
        self.steered
    }

    /// The pipeline's private (possibly edited) model.
    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn hooks(&self) -> &[Hook] {
        &self.hooks
    }

    pub fn control_names(&self) -> impl Iterator<Item = &str> {
        self.controls.iter().map(Control::name)
    }

    /// `σ_n ∘ … ∘ σ_1` applied left to right.
    pub fn adapt_prompt(&self, prompt: &str) -> Result<String> {
        let mut text = prompt.to_owned();
        for control in &self.controls {
            if let Control::Input(c) = control {
                text = c.adapt(&text).map_err(|e| e.in_control(c.name()))?;
            }
        }
        Ok(text)
    }

    fn output_control(&self) -> Option<&dyn crate::control::OutputControl> {
        self.controls.iter().find_map(|c| match c {
            Control::Output(o) => Some(o.as_ref()),
            _ => None,
        })
    }

    /// Resolves overrides against `datapoint`, lets state and output
    /// controls prepare their inference-time values, and decodes.
    pub fn generate(
        &self,
        prompt: &str,
        params: &GenParams,
        overrides: &RuntimeOverrides,
        datapoint: Option<&Value>,
    ) -> Result<PipelineOutput> {
        if !self.steered {
            return Err(Error::PipelineState("call steer() before generate()".into()));
        }
        if let Some(unknown) = overrides
            .controls()
            .find(|name| !self.controls.iter().any(|c| c.name() == *name))
        {
            return Err(Error::Override(format!(
                "overrides reference control `{unknown}`, which is not in the pipeline"
            )));
        }
        let adapted = self.adapt_prompt(prompt)?;
        let ids = encode_prompt(&adapted);
        let resolved = overrides.resolve(datapoint)?;
        let empty = ParamMap::new();
        let mut prepared = ResolvedOverrides::new();
        for control in &self.controls {
            let own = resolved.get(control.name()).unwrap_or(&empty);
            let values = match control {
                Control::State(c) => c.prepare(&adapted, own),
                Control::Output(c) => c.prepare(&adapted, own),
                _ => Ok(own.clone()),
            }
            .map_err(|e| e.in_control(control.name()))?;
            if !values.is_empty() {
                prepared.insert(control.name().to_owned(), values);
            }
        }
        let prepared = Arc::new(prepared);
        let new_ids = match self.output_control() {
            Some(out) => out
                .generate(&self.model, &ids, params, &self.hooks, &prepared)
                .map_err(|e| e.in_control(out.name()))?,
            None => default_generate(&self.model, &ids, params, &self.hooks, &prepared)?,
        };
        let text = detokenize(&new_ids)?;
        Ok(PipelineOutput {
            adapted_prompt: adapted,
            ids: new_ids,
            text,
        })
    }
}
