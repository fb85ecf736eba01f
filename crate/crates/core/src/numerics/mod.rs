// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dense kernels used by the runtime and the steering math.
//!
//! Every function here is pure. Row results of [`matmul`] depend only on the
//! corresponding input row, so batched and one-row-at-a-time evaluation
//! agree bitwise.

mod rng;
mod tensor;

pub use rng::Rng;
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Dimension(format!(
            "matmul expects matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let (k2, n) = (b.shape()[0], b.shape()[1]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "inner dimensions differ: {:?} · {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = vec![0.0f32; m * n];
    matmul_into(a.data(), b.data(), m, k, n, &mut out);
    Tensor::new(vec![m, n], out)
}

/// Slice-level matmul; `out` is overwritten.
pub(crate) fn matmul_into(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        out_row.fill(0.0);
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
}

/// Row-wise softmax over the last dimension.
///
/// `visible`, when given, has one flag per element; `false` entries are
/// excluded and come out as exactly zero.
pub fn softmax_rows(m: &Tensor, visible: Option<&[bool]>) -> Result<Tensor> {
    if let Some(mask) = visible {
        if mask.len() != m.numel() {
            return Err(Error::Dimension(format!(
                "mask has {} entries for a tensor of {}",
                mask.len(),
                m.numel()
            )));
        }
    }
    let width = m.row_len();
    let mut out = m.clone();
    for r in 0..m.num_rows() {
        let mask = visible.map(|v| &v[r * width..(r + 1) * width]);
        if !softmax_in_place(out.row_mut(r), mask) {
            return Err(Error::DegenerateRow { row: r });
        }
    }
    Ok(out)
}

/// Returns `false` if every entry is masked.
pub(crate) fn softmax_in_place(row: &mut [f32], visible: Option<&[bool]>) -> bool {
    let is_visible = |i: usize| visible.is_none_or(|v| v[i]);
    let mut max = f32::NEG_INFINITY;
    let mut any = false;
    for (i, &x) in row.iter().enumerate() {
        if is_visible(i) {
            any = true;
            if x > max {
                max = x;
            }
        }
    }
    if !any {
        return false;
    }
    let mut sum = 0.0f64;
    for (i, x) in row.iter_mut().enumerate() {
        if is_visible(i) {
            let e = f64::from(*x - max).exp();
            *x = e as f32;
            sum += e;
        } else {
            *x = 0.0;
        }
    }
    for (i, x) in row.iter_mut().enumerate() {
        if is_visible(i) {
            *x = (f64::from(*x) / sum) as f32;
        }
    }
    true
}

/// `x_i · gamma_i / sqrt(mean(x²) + eps)`.
pub fn rms_norm(x: &Tensor, gamma: &Tensor, eps: f32) -> Result<Tensor> {
    if x.shape() != gamma.shape() || x.rank() != 1 {
        return Err(Error::Dimension(format!(
            "rms_norm expects equal 1-D shapes, got {:?} and {:?}",
            x.shape(),
            gamma.shape()
        )));
    }
    if eps < 0.0 {
        return Err(Error::Dimension(format!("negative epsilon {eps}")));
    }
    let mut out = vec![0.0; x.numel()];
    rms_norm_into(x.data(), gamma.data(), eps, &mut out);
    Tensor::new(x.shape().to_vec(), out)
}

pub(crate) fn rms_norm_into(x: &[f32], gamma: &[f32], eps: f32, out: &mut [f32]) {
    let ms = x.iter().map(|&v| v * v).sum::<f32>() / x.len() as f32;
    let denom = (ms + eps).sqrt();
    if denom == 0.0 {
        out.fill(0.0);
        return;
    }
    let inv = 1.0 / denom;
    for ((o, &v), &g) in out.iter_mut().zip(x).zip(gamma) {
        *o = v * inv * g;
    }
}

/// Mean of a set of equal-length vectors plus projection statistics.
#[derive(Debug, Clone)]
pub struct VecStats {
    mean: Tensor,
    rows: Vec<Tensor>,
}

impl VecStats {
    pub fn mean(&self) -> &Tensor {
        &self.mean
    }

    pub fn count(&self) -> usize {
        self.rows.len()
    }

    /// Population standard deviation of the projections onto `direction`
    /// (normalized here, so any nonzero vector works).
    pub fn std_along(&self, direction: &Tensor) -> Result<f32> {
        if direction.shape() != self.mean.shape() {
            return Err(Error::Dimension(format!(
                "direction shape {:?} differs from data shape {:?}",
                direction.shape(),
                self.mean.shape()
            )));
        }
        let norm = f64::from(direction.norm());
        if norm == 0.0 {
            return Err(Error::Normalization("zero projection direction".into()));
        }
        let proj: Vec<f64> = self
            .rows
            .iter()
            .map(|r| {
                r.data()
                    .iter()
                    .zip(direction.data())
                    .map(|(&a, &b)| f64::from(a) * f64::from(b))
                    .sum::<f64>()
                    / norm
            })
            .collect();
        let n = proj.len() as f64;
        let mean = proj.iter().sum::<f64>() / n;
        let var = proj.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        Ok(var.sqrt() as f32)
    }
}

pub fn vec_stats(rows: &[Tensor]) -> Result<VecStats> {
    let first = rows
        .first()
        .ok_or_else(|| Error::EmptyData("vec_stats needs at least one row".into()))?;
    if rows.iter().any(|r| r.shape() != first.shape()) {
        return Err(Error::Dimension("vec_stats rows differ in shape".into()));
    }
    let d = first.numel();
    let mut acc = vec![0.0f64; d];
    for r in rows {
        for (a, &x) in acc.iter_mut().zip(r.data()) {
            *a += f64::from(x);
        }
    }
    let n = rows.len() as f64;
    let mean = acc.into_iter().map(|a| (a / n) as f32).collect();
    Ok(VecStats {
        mean: Tensor::new(first.shape().to_vec(), mean)?,
        rows: rows.to_vec(),
    })
}
