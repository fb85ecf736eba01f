// SPDX-License-Identifier: MIT OR Apache-2.0

//! Compact decoder-only transformer runtime.
//!
//! Learned absolute positions, pre-norm RMSNorm blocks, GELU MLP and a
//! byte-level vocabulary. State controls attach through [`Hook`]s at the
//! [`HookSite`]s exposed by [`forward`].

mod config;
mod forward;
pub mod format;
mod generate;
mod hooks;
mod model;
pub mod tokenizer;

pub use config::ModelConfig;
pub use format::{load_weights, save_weights};
pub use forward::{capture, forward, forward_cached, ForwardOutput, KvCache, NORM_EPS};
pub use generate::{argmax, default_generate, log_softmax, sample, GenParams};
pub use hooks::{Hook, HookFn, HookSite, ParamMap, Phase, ResolvedOverrides, StepContext};
pub use model::{init_random, tensor_checksum, weight_schema, Model, Weights, INIT_STD};
pub use tokenizer::{detokenize, encode_prompt, tokenize, BOS, EOS, PAD, PROMPT_OFFSET};
