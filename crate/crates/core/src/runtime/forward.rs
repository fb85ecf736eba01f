// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm causal transformer forward pass with a key/value cache.

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::numerics::{matmul_into, rms_norm_into, softmax_in_place, Tensor};
use crate::runtime::config::ModelConfig;
use crate::runtime::hooks::{Hook, HookSite, StepContext};
use crate::runtime::model::{layer_tensor, Model};

pub const NORM_EPS: f32 = 1e-5;

/// Row-sum tolerance for the debug-build attention check.
const ATTN_ROW_TOL: f64 = 1e-5;

/// Keys and values of every position already processed, per layer.
#[derive(Debug, Clone)]
pub struct KvCache {
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
    len: usize,
}

impl KvCache {
    pub fn new(config: &ModelConfig) -> Self {
        Self {
            keys: vec![Vec::new(); config.n_layers],
            values: vec![Vec::new(); config.n_layers],
            len: 0,
        }
    }

    /// Number of cached positions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn truncate(&mut self, len: usize, d_model: usize) {
        for k in &mut self.keys {
            k.truncate(len * d_model);
        }
        for v in &mut self.values {
            v.truncate(len * d_model);
        }
        self.len = len;
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[n, vocab]` for the `n` tokens of this pass.
    pub logits: Tensor,
    /// Per layer, `[n_heads, n, cached + n]` post-softmax (after hooks).
    pub attn: Vec<Tensor>,
}

/// Full forward pass over `ids` starting at position zero.
pub fn forward(model: &Model, ids: &[u32], hooks: &[Hook], ctx: &StepContext) -> Result<ForwardOutput> {
    let mut cache = KvCache::new(model.config());
    forward_cached(model, ids, &mut cache, hooks, ctx)
}

/// Processes `ids` at positions `cache.len()..` and appends their keys and
/// values to `cache`. On error the cache is restored to its previous length.
pub fn forward_cached(
    model: &Model,
    ids: &[u32],
    cache: &mut KvCache,
    hooks: &[Hook],
    ctx: &StepContext,
) -> Result<ForwardOutput> {
    let cfg = model.config();
    let start = cache.len;
    validate(cfg, ids, start, hooks, ctx)?;
    let out = run(model, ids, cache, hooks, ctx);
    match out {
        Ok(o) => {
            cache.len = start + ids.len();
            Ok(o)
        }
        Err(e) => {
            cache.truncate(start, cfg.d_model);
            Err(e)
        }
    }
}

/// Runs a prefill pass over `ids` and returns the tensor seen at each of
/// `sites` (after any `hooks` registered there).
pub fn capture(model: &Model, ids: &[u32], hooks: &[Hook], sites: &[HookSite]) -> Result<Vec<Tensor>> {
    let slots: Vec<Arc<Mutex<Option<Tensor>>>> = sites.iter().map(|_| Arc::default()).collect();
    let mut all = hooks.to_vec();
    for (site, slot) in sites.iter().zip(&slots) {
        let slot = slot.clone();
        all.push(Hook::new(*site, "capture", move |_, t| {
            *slot.lock().expect("capture slot") = Some(t.clone());
            t
        }));
    }
    forward(model, ids, &all, &StepContext::standalone(ids.len()))?;
    Ok(slots
        .into_iter()
        .map(|s| s.lock().expect("capture slot").take().expect("every site fires once"))
        .collect())
}

fn validate(cfg: &ModelConfig, ids: &[u32], start: usize, hooks: &[Hook], ctx: &StepContext) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Length("forward pass needs at least one token".into()));
    }
    if start + ids.len() > cfg.max_seq {
        return Err(Error::Length(format!(
            "sequence of {} tokens exceeds max_seq {}",
            start + ids.len(),
            cfg.max_seq
        )));
    }
    if ctx.positions != (start..start + ids.len()) {
        return Err(Error::Length(format!(
            "context positions {:?} do not match pass positions {:?}",
            ctx.positions,
            start..start + ids.len()
        )));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
        return Err(Error::Decode(bad));
    }
    if let Some(h) = hooks
        .iter()
        .find(|h| h.site.layer().is_some_and(|l| l >= cfg.n_layers))
    {
        return Err(Error::Dimension(format!(
            "hook `{}` targets {:?} but the model has {} layers",
            h.label, h.site, cfg.n_layers
        )));
    }
    Ok(())
}

fn run_hooks(hooks: &[Hook], site: HookSite, ctx: &StepContext, mut value: Tensor) -> Result<Tensor> {
    for hook in hooks.iter().filter(|h| h.site == site) {
        let expected = value.shape().to_vec();
        value = hook.apply(ctx, value);
        if value.shape() != expected.as_slice() {
            return Err(Error::HookShape {
                label: hook.label.clone(),
                expected,
                got: value.shape().to_vec(),
            });
        }
    }
    Ok(value)
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn rms_rows(x: &[f32], gamma: &[f32], d: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for (xi, oi) in x.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        rms_norm_into(xi, gamma, NORM_EPS, oi);
    }
    out
}

fn project(x: &[f32], w: &Tensor) -> Vec<f32> {
    let (k, n) = (w.shape()[0], w.shape()[1]);
    let m = x.len() / k;
    let mut out = vec![0.0; m * n];
    matmul_into(x, w.data(), m, k, n, &mut out);
    out
}

fn run(model: &Model, ids: &[u32], cache: &mut KvCache, hooks: &[Hook], ctx: &StepContext) -> Result<ForwardOutput> {
    let cfg = model.config();
    let (d, nh, dh) = (cfg.d_model, cfg.n_heads, cfg.d_head());
    let n = ids.len();
    let start = cache.len;
    let total = start + n;
    let scale = 1.0 / (dh as f32).sqrt();

    let tok_emb = model.tensor("tok_emb");
    let pos_emb = model.tensor("pos_emb");
    let mut x = Vec::with_capacity(n * d);
    for (i, &id) in ids.iter().enumerate() {
        let te = tok_emb.row(id as usize);
        let pe = pos_emb.row(start + i);
        x.extend(te.iter().zip(pe).map(|(a, b)| a + b));
    }

    let mut attn_maps = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let w = |name: &str| model.tensor(&layer_tensor(l, name));

        x = run_hooks(hooks, HookSite::ResidualPre(l), ctx, Tensor::new(vec![n, d], x)?)?.into_data();

        let h = rms_rows(&x, w("attn_norm").data(), d);
        let q = project(&h, w("wq"));
        cache.keys[l].extend(project(&h, w("wk")));
        cache.values[l].extend(project(&h, w("wv")));
        let keys = &cache.keys[l];
        let values = &cache.values[l];

        let mut attn = vec![0.0f32; nh * n * total];
        for head in 0..nh {
            let off = head * dh;
            for i in 0..n {
                let qi = &q[i * d + off..i * d + off + dh];
                let visible = start + i + 1;
                let row = &mut attn[(head * n + i) * total..(head * n + i + 1) * total];
                for (j, r) in row.iter_mut().enumerate().take(visible) {
                    let kj = &keys[j * d + off..j * d + off + dh];
                    *r = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
                }
                softmax_in_place(&mut row[..visible], None);
            }
        }
        let attn = run_hooks(hooks, HookSite::AttnWeights(l), ctx, Tensor::new(vec![nh, n, total], attn)?)?;
        if cfg!(debug_assertions) {
            for r in 0..attn.num_rows() {
                let sum: f64 = attn.row(r).iter().map(|&p| f64::from(p)).sum();
                if (sum - 1.0).abs() > ATTN_ROW_TOL {
                    return Err(Error::AttentionRow { layer: l, row: r, sum });
                }
            }
        }

        let mut heads = vec![0.0f32; n * d];
        for head in 0..nh {
            let off = head * dh;
            for i in 0..n {
                let row = attn.row(head * n + i);
                let out = &mut heads[i * d + off..i * d + off + dh];
                for (j, &p) in row.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let vj = &values[j * d + off..j * d + off + dh];
                    for (o, &v) in out.iter_mut().zip(vj) {
                        *o += p * v;
                    }
                }
            }
        }
        let heads = run_hooks(hooks, HookSite::HeadOut(l), ctx, Tensor::new(vec![n, nh, dh], heads)?)?;
        let attn_out = project(heads.data(), w("wo"));
        for (xi, a) in x.iter_mut().zip(&attn_out) {
            *xi += a;
        }

        let h = rms_rows(&x, w("mlp_norm").data(), d);
        let mut up = project(&h, w("w_up"));
        for u in &mut up {
            *u = gelu(*u);
        }
        let down = project(&up, w("w_down"));
        for (xi, m) in x.iter_mut().zip(&down) {
            *xi += m;
        }

        x = run_hooks(hooks, HookSite::ResidualPost(l), ctx, Tensor::new(vec![n, d], x)?)?.into_data();
        attn_maps.push(attn);
    }

    let h = rms_rows(&x, model.tensor("final_norm").data(), d);
    let logits = project(&h, model.tensor("unembed"));
    let logits = run_hooks(hooks, HookSite::Logits, ctx, Tensor::new(vec![n, cfg.vocab_size], logits)?)?;
    Ok(ForwardOutput {
        logits,
        attn: attn_maps,
    })
}
