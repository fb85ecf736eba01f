// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::runtime::{Phase, StepContext};

/// Decides per forward pass whether a transform fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gate {
    #[default]
    AlwaysOpen,
}

impl Gate {
    pub fn is_open(&self, _ctx: &StepContext) -> bool {
        match self {
            Self::AlwaysOpen => true,
        }
    }
}

/// Token positions a transform applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenScope {
    /// Positions after the prompt.
    #[default]
    Generated,
    /// Prompt positions.
    Prompt,
    All,
}

impl TokenScope {
    pub fn contains(&self, position: usize, prompt_len: usize) -> bool {
        match self {
            Self::Generated => position >= prompt_len,
            Self::Prompt => position < prompt_len,
            Self::All => true,
        }
    }
}

fn scaled_direction(vector: &Tensor, multiplier: f32, normalize: bool) -> Result<Vec<f32>> {
    let norm = vector.norm();
    if normalize && norm == 0.0 {
        return Err(Error::Normalization("cannot unit-normalize a zero steering vector".into()));
    }
    let scale = if normalize { multiplier / norm } else { multiplier };
    Ok(vector.data().iter().map(|&v| v * scale).collect())
}

/// `hidden + multiplier · (v/‖v‖ if normalize else v)` when `in_scope`,
/// otherwise `hidden`.
pub fn additive_transform(
    hidden: &Tensor,
    vector: &Tensor,
    multiplier: f32,
    normalize: bool,
    in_scope: bool,
) -> Result<Tensor> {
    if hidden.shape() != vector.shape() {
        return Err(Error::Dimension(format!(
            "hidden {:?} and steering vector {:?} differ",
            hidden.shape(),
            vector.shape()
        )));
    }
    if !in_scope {
        return Ok(hidden.clone());
    }
    let shift = scaled_direction(vector, multiplier, normalize)?;
    let data = hidden.data().iter().zip(&shift).map(|(h, s)| h + s).collect();
    Tensor::new(hidden.shape().to_vec(), data)
}

/// Adds a fixed vector to every in-scope row of a `[n, d]` residual.
#[derive(Debug, Clone)]
pub struct AdditiveTransform {
    shift: Vec<f32>,
    scope: TokenScope,
    gate: Gate,
}

impl AdditiveTransform {
    pub fn new(vector: &Tensor, multiplier: f32, normalize: bool, scope: TokenScope, gate: Gate) -> Result<Self> {
        Ok(Self {
            shift: scaled_direction(vector, multiplier, normalize)?,
            scope,
            gate,
        })
    }

    pub fn apply(&self, ctx: &StepContext, mut hidden: Tensor) -> Tensor {
        if !self.gate.is_open(ctx) {
            return hidden;
        }
        for (i, pos) in ctx.positions.clone().enumerate() {
            if self.scope.contains(pos, ctx.prompt_len) {
                for (h, s) in hidden.row_mut(i).iter_mut().zip(&self.shift) {
                    *h += s;
                }
            }
        }
        hidden
    }
}

/// Adds row `p` of a `[m, d]` sequence at prompt position `p < m`, during
/// prefill only.
#[derive(Debug, Clone)]
pub struct PositionalAdditiveTransform {
    rows: Tensor,
    coefficient: f32,
    gate: Gate,
}

impl PositionalAdditiveTransform {
    pub fn new(rows: Tensor, coefficient: f32, gate: Gate) -> Self {
        Self { rows, coefficient, gate }
    }

    pub fn apply(&self, ctx: &StepContext, mut hidden: Tensor) -> Tensor {
        if ctx.phase != Phase::Prefill || !self.gate.is_open(ctx) {
            return hidden;
        }
        let m = self.rows.num_rows();
        for (i, pos) in ctx.positions.clone().enumerate() {
            if pos >= m {
                break;
            }
            for (h, &v) in hidden.row_mut(i).iter_mut().zip(self.rows.row(pos)) {
                *h += self.coefficient * v;
            }
        }
        hidden
    }
}

/// Shift for one attention head's output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadShift {
    pub head: usize,
    /// `[d_head]`, already scaled.
    pub shift: Vec<f32>,
}

/// Adds per-head shifts to a `[n, n_heads, d_head]` head-output tensor.
#[derive(Debug, Clone)]
pub struct HeadAdditiveTransform {
    shifts: Vec<HeadShift>,
    scope: TokenScope,
    gate: Gate,
}

impl HeadAdditiveTransform {
    pub fn new(shifts: Vec<HeadShift>, scope: TokenScope, gate: Gate) -> Self {
        Self { shifts, scope, gate }
    }

    pub fn apply(&self, ctx: &StepContext, mut heads: Tensor) -> Tensor {
        if !self.gate.is_open(ctx) {
            return heads;
        }
        let (n_heads, d_head) = (heads.shape()[1], heads.shape()[2]);
        let data = heads.data_mut();
        for (i, pos) in ctx.positions.clone().enumerate() {
            if !self.scope.contains(pos, ctx.prompt_len) {
                continue;
            }
            for s in &self.shifts {
                let off = (i * n_heads + s.head) * d_head;
                for (h, v) in data[off..off + d_head].iter_mut().zip(&s.shift) {
                    *h += v;
                }
            }
        }
        heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn zero_multiplier_is_identity() {
        let h = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let v = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(additive_transform(&h, &v, 0.0, true, true).unwrap(), h);
        assert_eq!(additive_transform(&h, &v, 4.0, false, false).unwrap(), h);
    }

    #[test]
    fn normalized_shift_has_multiplier_norm() {
        let h = Tensor::vector(vec![0.5, -1.0, 2.0]);
        let v = Tensor::vector(vec![3.0, 0.0, 4.0]);
        let out = additive_transform(&h, &v, -10.0, true, true).unwrap();
        let diff: f32 = out
            .data()
            .iter()
            .zip(h.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            .sqrt();
        assert!((diff - 10.0).abs() < 1e-5);
    }

    #[test]
    fn zero_vector_cannot_normalize() {
        let z = Tensor::zeros(&[3]);
        assert!(matches!(
            AdditiveTransform::new(&z, 1.0, true, TokenScope::All, Gate::AlwaysOpen),
            Err(Error::Normalization(_))
        ));
    }

    #[test]
    fn scope_selects_rows() {
        let v = Tensor::vector(vec![1.0, 1.0]);
        let t = AdditiveTransform::new(&v, 1.0, false, TokenScope::Generated, Gate::AlwaysOpen).unwrap();
        let prefill = StepContext::prefill(3, Arc::default());
        let h = Tensor::zeros(&[3, 2]);
        assert_eq!(t.apply(&prefill, h.clone()), h);
        let decode = StepContext::decode(3, 3, 0, Arc::default());
        assert_eq!(t.apply(&decode, Tensor::zeros(&[1, 2])).data(), &[1.0, 1.0]);

        let p = AdditiveTransform::new(&v, 1.0, false, TokenScope::Prompt, Gate::AlwaysOpen).unwrap();
        assert_eq!(p.apply(&prefill, h.clone()).data(), &[1.0; 6]);
        assert_eq!(p.apply(&decode, Tensor::zeros(&[1, 2])).data(), &[0.0, 0.0]);
    }

    #[test]
    fn positional_only_in_prefill() {
        let rows = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let t = PositionalAdditiveTransform::new(rows, 2.0, Gate::AlwaysOpen);
        let out = t.apply(&StepContext::prefill(3, Arc::default()), Tensor::zeros(&[3, 1]));
        assert_eq!(out.data(), &[2.0, 4.0, 0.0]);
        let dec = t.apply(&StepContext::decode(1, 1, 0, Arc::default()), Tensor::zeros(&[1, 1]));
        assert_eq!(dec.data(), &[0.0]);
    }

    #[test]
    fn head_shift_targets_one_head() {
        let t = HeadAdditiveTransform::new(
            vec![HeadShift { head: 1, shift: vec![1.0, 2.0] }],
            TokenScope::All,
            Gate::AlwaysOpen,
        );
        let out = t.apply(&StepContext::prefill(1, Arc::default()), Tensor::zeros(&[1, 2, 2]));
        assert_eq!(out.data(), &[0.0, 0.0, 1.0, 2.0]);
    }
}
