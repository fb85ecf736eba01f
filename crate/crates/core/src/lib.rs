// SPDX-License-Identifier: MIT OR Apache-2.0

//! Composable steering of a small decoder-only language model.
//!
//! Controls act on one of four surfaces (prompt, weights, activations and
//! attention, decoding) and compose into a [`SteeringPipeline`]. Pipelines
//! are compared on a [`UseCase`](evaluation::UseCase) by a
//! [`Benchmark`](benchmark::Benchmark), which can sweep control parameters
//! and plot the resulting tradeoffs.

pub mod benchmark;
pub mod control;
pub mod error;
pub mod evaluation;
pub mod input;
mod jsonl;
pub mod numerics;
pub mod output;
pub mod runtime;
pub mod state;
pub mod structural;

pub use control::{Control, ControlSpec, RuntimeOverrides, SteeringPipeline};
pub use error::{Error, Result};
pub use numerics::{Rng, Tensor};
pub use runtime::{GenParams, Hook, HookSite, Model, ModelConfig, ParamMap, StepContext};
