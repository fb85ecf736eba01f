// SPDX-License-Identifier: MIT OR Apache-2.0

//! Decoding strategies.

mod deal;
mod logit_bias;
mod reward;

pub use deal::{deal_generate, Deal, DealParams, LookaheadParams};
pub use logit_bias::{logit_bias, LogitBias, LogitBiasParams};
pub use reward::{Reward, RewardCallback};
