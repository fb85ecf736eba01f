// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fixtures and an f64 reference forward pass written without the crate's
//! kernels or hook machinery.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use steerbench_core::runtime::{
    default_generate, encode_prompt, forward, init_random, GenParams, Hook, HookSite, Model, ModelConfig, StepContext,
};
use steerbench_core::{Control, Rng, RuntimeOverrides, SteeringPipeline};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn reference_model(seed: u64) -> Model {
    init_random(&ModelConfig::reference(), seed).unwrap()
}

pub fn wide_model(seed: u64) -> Model {
    let cfg: ModelConfig =
        serde_json::from_str(&std::fs::read_to_string(data_dir().join("model_wide.json")).unwrap()).unwrap();
    init_random(&cfg, seed).unwrap()
}

pub fn small_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ff: 32,
        max_seq: 64,
        ..ModelConfig::reference()
    };
    init_random(&cfg, seed).unwrap()
}

/// Printable ASCII prompts of 3..=max_len bytes.
pub fn random_prompts(n: usize, max_len: usize, seed: u64) -> Vec<String> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|_| {
            let len = 3 + rng.below((max_len - 2) as u64) as usize;
            (0..len).map(|_| (b' ' + rng.below(95) as u8) as char).collect()
        })
        .collect()
}

fn w(model: &Model, name: &str) -> Vec<f64> {
    model.tensor(name).data().iter().map(|&x| f64::from(x)).collect()
}

fn mat(x: &[Vec<f64>], w: &[f64], cols: usize) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            (0..cols)
                .map(|c| row.iter().enumerate().map(|(k, &v)| v * w[k * cols + c]).sum())
                .collect()
        })
        .collect()
}

fn rms(x: &[Vec<f64>], g: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| {
            let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
            let inv = 1.0 / (ms + 1e-5).sqrt();
            row.iter().zip(g).map(|(v, g)| v * inv * g).collect()
        })
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

pub struct OracleOutput {
    /// Residual stream after each layer, `[n][d]`.
    pub residual_post: Vec<Vec<Vec<f64>>>,
    pub logits: Vec<Vec<f64>>,
}

/// Full-sequence forward pass in f64. `add` is added to the residual
/// stream after the given layer at every position in `positions`.
pub fn oracle_forward(model: &Model, ids: &[u32], add: Option<(usize, &[f64], &[usize])>) -> OracleOutput {
    let cfg = model.config();
    let (d, nh, v) = (cfg.d_model, cfg.n_heads, cfg.vocab_size);
    let dh = d / nh;
    let tok = w(model, "tok_emb");
    let pos = w(model, "pos_emb");
    let mut x: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(i, &t)| (0..d).map(|c| tok[t as usize * d + c] + pos[i * d + c]).collect())
        .collect();
    let n = x.len();
    let mut residual_post = Vec::new();
    for l in 0..cfg.n_layers {
        let lw = |s: &str| w(model, &format!("layers.{l}.{s}"));
        let h = rms(&x, &lw("attn_norm"));
        let q = mat(&h, &lw("wq"), d);
        let k = mat(&h, &lw("wk"), d);
        let vv = mat(&h, &lw("wv"), d);
        let mut heads = vec![vec![0.0; d]; n];
        for head in 0..nh {
            let o = head * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..=i)
                    .map(|j| (0..dh).map(|c| q[i][o + c] * k[j][o + c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = e.iter().sum();
                for (j, ej) in e.iter().enumerate() {
                    for c in 0..dh {
                        heads[i][o + c] += ej / z * vv[j][o + c];
                    }
                }
            }
        }
        let a = mat(&heads, &lw("wo"), d);
        for (xi, ai) in x.iter_mut().zip(&a) {
            for (p, q) in xi.iter_mut().zip(ai) {
                *p += q;
            }
        }
        let h = rms(&x, &lw("mlp_norm"));
        let up: Vec<Vec<f64>> = mat(&h, &lw("w_up"), cfg.d_ff)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let down = mat(&up, &lw("w_down"), d);
        for (xi, di) in x.iter_mut().zip(&down) {
            for (p, q) in xi.iter_mut().zip(di) {
                *p += q;
            }
        }
        if let Some((layer, vec, positions)) = add {
            if layer == l {
                for &p in positions.iter().filter(|&&p| p < n) {
                    for (a, b) in x[p].iter_mut().zip(vec) {
                        *a += b;
                    }
                }
            }
        }
        residual_post.push(x.clone());
    }
    let h = rms(&x, &w(model, "final_norm"));
    let logits = mat(&h, &w(model, "unembed"), v);
    OracleOutput { residual_post, logits }
}

/// Log-softmax of one row in f64.
pub fn log_softmax64(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = row.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    row.iter().map(|x| x - z).collect()
}

/// Unhooked greedy decoding from `prompt`.
pub fn baseline_greedy(model: &Model, prompt: &str, max_new_tokens: usize) -> Vec<u32> {
    let params = GenParams::greedy(max_new_tokens).unwrap();
    default_generate(model, &encode_prompt(prompt), &params, &[], &Arc::default()).unwrap()
}

/// Steers a pipeline over `controls` and decodes greedily from `prompt`.
pub fn pipeline_greedy(
    model: &Model,
    controls: Vec<Control>,
    prompt: &str,
    max_new_tokens: usize,
    overrides: &RuntimeOverrides,
) -> Vec<u32> {
    let mut p = SteeringPipeline::new(model, controls).unwrap();
    p.steer().unwrap();
    let params = GenParams::greedy(max_new_tokens).unwrap();
    p.generate(prompt, &params, overrides, None).unwrap().ids
}

/// Sets every logit outside `allowed` to negative infinity.
pub fn restrict_vocab(allowed: &'static [u32]) -> Hook {
    Hook::new(HookSite::Logits, "restrict", move |_, mut logits| {
        let v = logits.row_len();
        for row in logits.data_mut().chunks_mut(v) {
            for (t, x) in row.iter_mut().enumerate() {
                if !allowed.contains(&(t as u32)) {
                    *x = f32::NEG_INFINITY;
                }
            }
        }
        logits
    })
}

#[derive(Clone)]
struct OracleBeam {
    tokens: Vec<u32>,
    logprob: f64,
}

/// Log-probabilities of the next token after `ids`, from a fresh forward pass.
pub fn next_logprobs(model: &Model, ids: &[u32], hooks: &[Hook]) -> Vec<f64> {
    let out = forward(model, ids, hooks, &StepContext::standalone(ids.len())).unwrap();
    let row: Vec<f64> = out.logits.row(ids.len() - 1).iter().map(|&x| f64::from(x)).collect();
    log_softmax64(&row)
}

/// Plain beam search with greedy lookahead and no reward signal.
pub fn beam_oracle(model: &Model, prompt: &[u32], hooks: &[Hook], k: usize, b: usize, l: usize, depth: usize) -> Vec<u32> {
    let mut beams = vec![OracleBeam {
        tokens: vec![],
        logprob: 0.0,
    }];
    loop {
        if beams.iter().all(|x| x.tokens.len() >= depth) {
            break;
        }
        let mut cands = Vec::new();
        for beam in &beams {
            if beam.tokens.len() >= depth {
                cands.push(beam.clone());
                continue;
            }
            let seq = [prompt, &beam.tokens].concat();
            let lp = next_logprobs(model, &seq, hooks);
            let mut order: Vec<u32> = (0..lp.len() as u32).collect();
            order.sort_by(|&x, &y| lp[y as usize].total_cmp(&lp[x as usize]).then(x.cmp(&y)));
            for &first in &order[..b] {
                let mut c = beam.clone();
                c.tokens.push(first);
                c.logprob += lp[first as usize];
                while c.tokens.len() < depth && c.tokens.len() - beam.tokens.len() < l {
                    let lp = next_logprobs(model, &[prompt, &c.tokens].concat(), hooks);
                    let best = (0..lp.len()).fold(0, |m, i| if lp[i] > lp[m] { i } else { m });
                    c.tokens.push(best as u32);
                    c.logprob += lp[best];
                }
                cands.push(c);
            }
        }
        cands.sort_by(|x, y| y.logprob.total_cmp(&x.logprob).then_with(|| x.tokens.cmp(&y.tokens)));
        cands.truncate(k);
        beams = cands;
    }
    beams.swap_remove(0).tokens
}
