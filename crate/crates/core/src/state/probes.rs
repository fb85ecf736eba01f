// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};
use crate::runtime::{capture, encode_prompt, HookSite, Model};

pub const PROBE_LR: f64 = 0.1;
pub const PROBE_EPOCHS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPrompt {
    pub prompt: String,
    /// 0 or 1.
    pub label: u8,
}

/// Last-token head outputs, one `[n_examples, d_head]` matrix per head in
/// layer-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadActivations {
    n_layers: usize,
    n_heads: usize,
    heads: Vec<Tensor>,
}

impl HeadActivations {
    pub fn new(n_layers: usize, n_heads: usize, heads: Vec<Tensor>) -> Result<Self> {
        if heads.len() != n_layers * n_heads || heads.is_empty() {
            return Err(Error::Dimension(format!(
                "expected {} head matrices, got {}",
                n_layers * n_heads,
                heads.len()
            )));
        }
        let shape = heads[0].shape().to_vec();
        if shape.len() != 2 || heads.iter().any(|h| h.shape() != shape.as_slice()) {
            return Err(Error::Dimension("head matrices must share one [n, d_head] shape".into()));
        }
        Ok(Self { n_layers, n_heads, heads })
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn n_examples(&self) -> usize {
        self.heads[0].shape()[0]
    }

    pub fn head(&self, layer: usize, head: usize) -> &Tensor {
        &self.heads[layer * self.n_heads + head]
    }
}

/// Runs each prompt once and keeps every head's output at the last token.
pub fn collect_head_activations(model: &Model, prompts: &[&str]) -> Result<HeadActivations> {
    let cfg = model.config();
    let (l, h, dh) = (cfg.n_layers, cfg.n_heads, cfg.d_head());
    if prompts.is_empty() {
        return Err(Error::EmptyData("no prompts to probe".into()));
    }
    let sites: Vec<HookSite> = (0..l).map(HookSite::HeadOut).collect();
    let mut data = vec![Vec::with_capacity(prompts.len() * dh); l * h];
    for (i, prompt) in prompts.iter().enumerate() {
        let ids = encode_prompt(prompt);
        if ids.len() > cfg.max_seq {
            return Err(Error::Length(format!(
                "example {i} has {} tokens, max_seq is {}",
                ids.len(),
                cfg.max_seq
            )));
        }
        let last = ids.len() - 1;
        for (layer, out) in capture(model, &ids, &[], &sites)?.into_iter().enumerate() {
            let row = &out.data()[last * h * dh..(last + 1) * h * dh];
            for head in 0..h {
                data[layer * h + head].extend_from_slice(&row[head * dh..(head + 1) * dh]);
            }
        }
    }
    let heads = data
        .into_iter()
        .map(|d| Tensor::new(vec![prompts.len(), dh], d))
        .collect::<Result<_>>()?;
    HeadActivations::new(l, h, heads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub layer: usize,
    pub head: usize,
    /// Unit-norm `[d_head]`.
    pub direction: Tensor,
    /// Population std of all examples' projections onto `direction`.
    pub sigma: f32,
    /// Probe accuracy on the validation split.
    pub accuracy: f32,
}

/// One record per (layer, head), layer-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTable {
    pub n_layers: usize,
    pub n_heads: usize,
    pub records: Vec<ProbeRecord>,
}

impl ProbeTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, layer: usize, head: usize) -> &ProbeRecord {
        &self.records[layer * self.n_heads + head]
    }
}

/// Stratified split. Walks one seeded shuffle of all indices and sends each
/// example to validation until its class quota is met, so relabeling the
/// classes leaves the split unchanged.
fn split(labels: &[u8], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let count = |c: u8| labels.iter().filter(|&&l| l == c).count();
    let quota = |n: usize| ((val_fraction * n as f64).round() as usize).min(n - 1);
    let mut left = [quota(count(0)), quota(count(1))];
    let mut order: Vec<usize> = (0..labels.len()).collect();
    Rng::new(seed).shuffle(&mut order);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for i in order {
        let c = usize::from(labels[i]);
        if left[c] > 0 {
            left[c] -= 1;
            val.push(i);
        } else {
            train.push(i);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Full-batch gradient descent on binary cross-entropy from zero weights.
fn fit_logistic(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let n = x.len() as f64;
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let mut gw = vec![0.0; d];
    for _ in 0..PROBE_EPOCHS {
        gw.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (xi, &yi) in x.iter().zip(y) {
            let z = b + xi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(z) - yi;
            gb += err;
            for (g, a) in gw.iter_mut().zip(xi) {
                *g += err * a;
            }
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= PROBE_LR * g / n;
        }
        b -= PROBE_LR * gb / n;
    }
    (w, b)
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (norm > 0.0).then(|| v.iter().map(|a| a / norm).collect())
}

fn train_one(
    acts: &Tensor,
    labels: &[u8],
    train: &[usize],
    val: &[usize],
    layer: usize,
    head: usize,
) -> Result<ProbeRecord> {
    let rows: Vec<Vec<f64>> = (0..acts.num_rows())
        .map(|i| acts.row(i).iter().map(|&a| f64::from(a)).collect())
        .collect();
    let d = acts.row_len();
    let x: Vec<Vec<f64>> = train.iter().map(|&i| rows[i].clone()).collect();
    let y: Vec<f64> = train.iter().map(|&i| f64::from(labels[i])).collect();
    let (w, b) = fit_logistic(&x, &y);

    let eval = if val.is_empty() { train } else { val };
    let correct = eval
        .iter()
        .filter(|&&i| {
            let z = b + rows[i].iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            u8::from(z > 0.0) == labels[i]
        })
        .count();
    let accuracy = correct as f32 / eval.len() as f32;

    let mut means = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut counts = [0usize; 2];
    for &i in train {
        let c = usize::from(labels[i]);
        counts[c] += 1;
        for (m, a) in means[c].iter_mut().zip(&rows[i]) {
            *m += a;
        }
    }
    let shift: Vec<f64> = means[1]
        .iter()
        .zip(&means[0])
        .map(|(a, b)| a / counts[1] as f64 - b / counts[0] as f64)
        .collect();
    let direction = unit(&shift).or_else(|| unit(&w)).ok_or_else(|| {
        Error::Normalization(format!("layer {layer} head {head}: classes are indistinguishable"))
    })?;

    let proj: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().zip(&direction).map(|(a, c)| a * c).sum())
        .collect();
    let mean = proj.iter().sum::<f64>() / proj.len() as f64;
    let var = proj.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / proj.len() as f64;

    Ok(ProbeRecord {
        layer,
        head,
        direction: Tensor::vector(direction.into_iter().map(|a| a as f32).collect()),
        sigma: var.sqrt() as f32,
        accuracy,
    })
}

/// Trains one probe per head on precomputed activations.
pub fn train_probes_on_activations(
    acts: &HeadActivations,
    labels: &[u8],
    val_fraction: f64,
    seed: u64,
) -> Result<ProbeTable> {
    if labels.len() != acts.n_examples() {
        return Err(Error::Dimension(format!(
            "{} labels for {} examples",
            labels.len(),
            acts.n_examples()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::ClassBalance(format!("label {bad} is not 0 or 1")));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    let zeros = labels.len() - ones;
    if ones < 2 || zeros < 2 {
        return Err(Error::ClassBalance(format!(
            "need at least 2 examples per class, got {zeros} of class 0 and {ones} of class 1"
        )));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::Config(format!("val_fraction must be in [0, 1), got {val_fraction}")));
    }
    let (train, val) = split(labels, val_fraction, seed);
    let mut records = Vec::with_capacity(acts.n_layers() * acts.n_heads());
    for layer in 0..acts.n_layers() {
        for head in 0..acts.n_heads() {
            records.push(train_one(acts.head(layer, head), labels, &train, &val, layer, head)?);
        }
    }
    Ok(ProbeTable {
        n_layers: acts.n_layers(),
        n_heads: acts.n_heads(),
        records,
    })
}

/// Probes every (layer, head) of `model` on the labeled prompts.
pub fn train_head_probes(
    model: &Model,
    labeled: &[LabeledPrompt],
    val_fraction: f64,
    seed: u64,
) -> Result<ProbeTable> {
    let prompts: Vec<&str> = labeled.iter().map(|p| p.prompt.as_str()).collect();
    let labels: Vec<u8> = labeled.iter().map(|p| p.label).collect();
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::ClassBalance(format!("label {bad} is not 0 or 1")));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones < 2 || labels.len() - ones < 2 {
        return Err(Error::ClassBalance(format!(
            "need at least 2 examples per class, got {} of class 0 and {ones} of class 1",
            labels.len() - ones
        )));
    }
    let acts = collect_head_activations(model, &prompts)?;
    train_probes_on_activations(&acts, &labels, val_fraction, seed)
}

/// The `k` most accurate heads; equal accuracies keep (layer, head) order.
pub fn select_topk_heads(table: &ProbeTable, k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 || k > table.len() {
        return Err(Error::Selection(format!("K must be in 1..={}, got {k}", table.len())));
    }
    let mut order: Vec<&ProbeRecord> = table.records.iter().collect();
    order.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy));
    Ok(order.into_iter().take(k).map(|r| (r.layer, r.head)).collect())
}
