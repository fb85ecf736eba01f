// SPDX-License-Identifier: MIT OR Apache-2.0

//! Weight-space controls.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::StructuralControl;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::runtime::format::{read_file, Completeness};
use crate::runtime::Weights;

/// Named tensors to add onto a model, any subset of its schema.
pub type WeightDelta = Weights;

/// Reads a delta stored in the weight file format.
pub fn load_delta(path: &Path) -> Result<WeightDelta> {
    Ok(read_file(path, Completeness::Subset)?.1)
}

fn combine(a: &Tensor, b: &Tensor, f: impl Fn(f32, f32) -> f32) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes already checked")
}

/// `θ + scale·Δ` for every tensor named in `delta`.
pub fn apply_task_vector(weights: &Weights, delta: &WeightDelta, scale: f32) -> Result<Weights> {
    for (name, d) in delta {
        let w = weights.get(name).ok_or_else(|| Error::Structural {
            tensor: name.clone(),
            message: "not in the model".into(),
        })?;
        if w.shape() != d.shape() {
            return Err(Error::Structural {
                tensor: name.clone(),
                message: format!("delta shape {:?} does not match weight shape {:?}", d.shape(), w.shape()),
            });
        }
    }
    let mut out = weights.clone();
    if scale == 0.0 {
        return Ok(out);
    }
    for (name, d) in delta {
        let w = out.get_mut(name).expect("checked above");
        *w = combine(w, d, |x, y| x + scale * y);
    }
    Ok(out)
}

/// `(1−t)·a + t·b` elementwise.
pub fn interpolate_weights(a: &Weights, b: &Weights, t: f32) -> Result<Weights> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("t must be in [0, 1], got {t}")));
    }
    if let Some(name) = a.keys().chain(b.keys()).find(|n| !a.contains_key(*n) || !b.contains_key(*n)) {
        return Err(Error::Structural {
            tensor: name.clone(),
            message: "present in only one of the two models".into(),
        });
    }
    for (name, ta) in a {
        if ta.shape() != b[name].shape() {
            return Err(Error::Structural {
                tensor: name.clone(),
                message: format!("shapes {:?} and {:?} differ", ta.shape(), b[name].shape()),
            });
        }
    }
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    Ok(a.iter()
        .map(|(name, ta)| (name.clone(), combine(ta, &b[name], |x, y| (1.0 - t) * x + t * y)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskVectorParams {
    #[serde(default = "one")]
    pub scale: f32,
}

fn one() -> f32 {
    1.0
}

/// Adds a scaled weight delta.
#[derive(Debug, Clone)]
pub struct TaskVector {
    name: String,
    delta: WeightDelta,
    scale: f32,
}

impl TaskVector {
    pub fn new(name: impl Into<String>, params: TaskVectorParams, delta: WeightDelta) -> Self {
        Self {
            name: name.into(),
            delta,
            scale: params.scale,
        }
    }
}

impl StructuralControl for TaskVector {
    fn name(&self) -> &str {
        &self.name
    }

    fn apply_to_weights(&mut self, weights: &mut Weights) -> Result<()> {
        *weights = apply_task_vector(weights, &self.delta, self.scale)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterpolateParams {
    pub t: f32,
}

/// Merges toward another model's weights.
#[derive(Debug, Clone)]
pub struct Interpolate {
    name: String,
    other: Weights,
    t: f32,
}

impl Interpolate {
    pub fn new(name: impl Into<String>, params: InterpolateParams, other: Weights) -> Self {
        Self {
            name: name.into(),
            other,
            t: params.t,
        }
    }
}

impl StructuralControl for Interpolate {
    fn name(&self) -> &str {
        &self.name
    }

    fn apply_to_weights(&mut self, weights: &mut Weights) -> Result<()> {
        *weights = interpolate_weights(weights, &self.other, self.t)?;
        Ok(())
    }
}
