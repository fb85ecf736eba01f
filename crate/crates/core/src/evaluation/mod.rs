// SPDX-License-Identifier: MIT OR Apache-2.0

//! Use cases, verifiable instruction checkers and metrics.

pub mod checkers;
mod datapoint;
mod metrics;
mod usecase;

pub use checkers::{check_instruction, CHECKERS};
pub use datapoint::{load_datapoints, validate_datapoints, DataPoint, Generation};
pub use metrics::{
    loglik_reward, loglik_reward_ids, perplexity, response_logprobs, Metric, MetricResult, Perplexity,
    RewardScore, ScoreTransform, StrictInstruction, STRICT_INSTRUCTION_LEVEL, STRICT_PROMPT_LEVEL,
};
pub use usecase::{usecase_run, InstructionFollowing, MetricFailure, MetricReport, UseCase};
