// SPDX-License-Identifier: MIT OR Apache-2.0

//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL`
//! line straight to stdout so the verdicts show without `--nocapture`.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::json;
use steerbench_core::benchmark::{pareto_frontier, BenchmarkConfig, Benchmark, ResultTable};
use steerbench_core::control::{PipelineConfig, StateControl};
use steerbench_core::evaluation::{check_instruction, load_datapoints, Generation, Metric, StrictInstruction};
use steerbench_core::output::{deal_generate, Deal, DealParams, LogitBias, LogitBiasParams, LookaheadParams, Reward};
use steerbench_core::runtime::{
    default_generate, encode_prompt, forward, load_weights, save_weights, tokenize, GenParams, ParamMap,
    ResolvedOverrides, StepContext,
};
use steerbench_core::state::{
    estimate_mean_difference, load_labeled_prompts, load_pairs, pasta_rescale, select_topk_heads,
    train_probes_on_activations, Accumulate, ActAdd, ActAddParams, Caa, CaaParams, ContrastivePairs,
    HeadActivations, Iti, ItiParams, Pasta, PastaParams, ProbeRecord, ProbeTable, ScalePosition, TokenScope,
    SPAN_POSITIONS_KEY,
};
use steerbench_core::structural::{apply_task_vector, TaskVector, TaskVectorParams};
use steerbench_core::{Control, Rng, RuntimeOverrides, SteeringPipeline, Tensor};

use common::{
    baseline_greedy, beam_oracle, data_dir, oracle_forward, pipeline_greedy, random_prompts, reference_model,
    restrict_vocab, wide_model,
};

type Verdict = Result<String, String>;

fn report(n: u32, title: &str, verdict: Verdict) {
    let line = match &verdict {
        Ok(detail) => format!("PASS criterion {n:>2} ({title}): {detail}\n"),
        Err(detail) => format!("FAIL criterion {n:>2} ({title}): {detail}\n"),
    };
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    if let Err(e) = verdict {
        panic!("criterion {n} failed: {e}");
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const PASTA_SUBSTRING: &str = "Your response should follow the instructions below";

#[test]
fn criterion_01_baseline_identity() {
    let run = || -> Verdict {
        let start = Instant::now();
        let model = reference_model(0);
        let params = GenParams::greedy(16).unwrap();
        let mut pipeline = SteeringPipeline::new(&model, vec![]).unwrap();
        pipeline.steer().unwrap();
        for (i, prompt) in random_prompts(20, 40, 2024).iter().enumerate() {
            let raw = default_generate(&model, &encode_prompt(prompt), &params, &[], &Arc::default()).unwrap();
            let piped = pipeline.generate(prompt, &params, &RuntimeOverrides::new(), None).unwrap();
            ensure(piped.ids == raw, || format!("prompt {i} diverged"))?;
        }
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
        Ok(format!("20/20 prompts token-identical in {elapsed:.2?}"))
    };
    report(1, "baseline identity", run());
}

fn sycophancy_pairs(n: usize) -> ContrastivePairs {
    let all = load_pairs(&data_dir().join("sycophancy_pairs.jsonl")).unwrap();
    ContrastivePairs::new(all.pairs()[..n].to_vec()).unwrap()
}

#[test]
fn criterion_02_neutral_parameters() {
    let run = || -> Verdict {
        let model = reference_model(3);
        let none = RuntimeOverrides::new();
        let prompts = random_prompts(5, 30, 77);
        let mut checked = 0;
        for prompt in &prompts {
            let base = baseline_greedy(&model, prompt, 12);
            let mut neutral: Vec<(&str, Control)> = Vec::new();
            for scope in [TokenScope::Generated, TokenScope::All] {
                neutral.push((
                    "CAA multiplier=0",
                    Control::state(
                        Caa::new(
                            "CAA",
                            CaaParams {
                                layer_id: 2,
                                multiplier: 0.0,
                                normalize: false,
                                token_scope: scope,
                                train_spec: Default::default(),
                            },
                            sycophancy_pairs(3),
                        )
                        .unwrap(),
                    ),
                ));
            }
            neutral.push((
                "PASTA alpha=1",
                Control::state(
                    Pasta::new(
                        "PASTA",
                        PastaParams {
                            head_config: (0..16).collect(),
                            scale_position: ScalePosition::Include,
                            alpha: 1.0,
                            substrings: vec![prompt[..2].to_owned()],
                        },
                    )
                    .unwrap(),
                ),
            ));
            neutral.push((
                "ActAdd coefficient=0",
                Control::state(ActAdd::new(
                    "ActAdd",
                    ActAddParams {
                        positive: "Love".into(),
                        negative: "Hate".into(),
                        layer_id: 1,
                        multiplier: 0.0,
                    },
                )),
            ));
            neutral.push((
                "ITI multiplier=0",
                Control::state(
                    Iti::new(
                        "ITI",
                        ItiParams {
                            num_heads: 4,
                            multiplier: 0.0,
                            val_fraction: 0.5,
                            seed: 0,
                            token_scope: TokenScope::All,
                        },
                        load_labeled_prompts(&data_dir().join("iti_truthfulness.jsonl")).unwrap(),
                    )
                    .unwrap(),
                ),
            ));
            neutral.push((
                "logit_bias={}",
                Control::output(LogitBias::new("LogitBias", LogitBiasParams::default())),
            ));
            for (label, control) in neutral {
                let out = pipeline_greedy(&model, vec![control], prompt, 12, &none);
                ensure(out == base, || format!("{label} diverged on {prompt:?}"))?;
                checked += 1;
            }
        }
        Ok(format!("{checked} neutral runs token-identical to baseline"))
    };
    report(2, "neutral-parameter equivalence", run());
}

#[test]
fn criterion_03_caa_estimator_oracle() {
    let run = || -> Verdict {
        let model = reference_model(1);
        let pairs = sycophancy_pairs(5);
        let layer = 2;
        let v = estimate_mean_difference(&model, &pairs, layer, Accumulate::LastToken).unwrap();
        let mut oracle = vec![0.0f64; model.config().d_model];
        for p in pairs.pairs() {
            for (completion, sign) in [(&p.positive, 1.0), (&p.negative, -1.0)] {
                let ids = encode_prompt(&format!("{}{}", p.prompt, completion));
                let out = oracle_forward(&model, &ids, None);
                for (o, h) in oracle.iter_mut().zip(&out.residual_post[layer][ids.len() - 1]) {
                    *o += sign * h / pairs.len() as f64;
                }
            }
        }
        let worst = v
            .data()
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (f64::from(*a) - b).abs())
            .fold(0.0, f64::max);
        ensure(worst <= 1e-6, || format!("max component error {worst:e}"))?;
        let swapped = estimate_mean_difference(&model, &pairs.swapped(), layer, Accumulate::LastToken).unwrap();
        let exact = v.data().iter().zip(swapped.data()).all(|(a, b)| *a == -*b);
        ensure(exact, || "label swap is not an exact negation".into())?;
        Ok(format!("max |error| {worst:.1e} over 5 pairs; swap negates exactly"))
    };
    report(3, "CAA estimator oracle", run());
}

fn separable_activations(n_layers: usize, n_heads: usize, n: usize, d: usize, seed: u64) -> (HeadActivations, Vec<u8>) {
    let mut rng = Rng::new(seed);
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let heads = (0..n_layers * n_heads)
        .map(|_| {
            let u: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let offset: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let mut data = Vec::with_capacity(n * d);
            for &y in &labels {
                let sign = if y == 1 { 1.0 } else { -1.0 };
                let margin = 1.0 + rng.next_f64();
                for c in 0..d {
                    data.push((offset[c] + sign * margin * 2.0 * u[c] / norm + 0.3 * rng.normal()) as f32);
                }
            }
            Tensor::new(vec![n, d], data).unwrap()
        })
        .collect();
    (HeadActivations::new(n_layers, n_heads, heads).unwrap(), labels)
}

#[test]
fn criterion_04_iti_probes() {
    let run = || -> Verdict {
        let (acts, labels) = separable_activations(3, 4, 80, 16, 11);
        let table = train_probes_on_activations(&acts, &labels, 0.5, 0).unwrap();
        let worst_acc = table.records.iter().map(|r| r.accuracy).fold(f32::INFINITY, f32::min);
        ensure(worst_acc >= 0.95, || format!("lowest probe accuracy {worst_acc}"))?;
        let worst_norm = table
            .records
            .iter()
            .map(|r| (f64::from(r.direction.norm()) - 1.0).abs())
            .fold(0.0, f64::max);
        ensure(worst_norm <= 1e-6, || format!("direction norm off by {worst_norm:e}"))?;

        let mut rng = Rng::new(5);
        for trial in 0..200 {
            let (nl, nh) = (1 + rng.below(4) as usize, 1 + rng.below(6) as usize);
            let records: Vec<ProbeRecord> = (0..nl * nh)
                .map(|i| ProbeRecord {
                    layer: i / nh,
                    head: i % nh,
                    direction: Tensor::vector(vec![1.0]),
                    sigma: 1.0,
                    accuracy: rng.below(5) as f32 / 4.0,
                })
                .collect();
            let k = 1 + rng.below((nl * nh) as u64) as usize;
            let mut order: Vec<usize> = (0..records.len()).collect();
            // Insertion sort: stable by construction.
            for i in 1..order.len() {
                let mut j = i;
                while j > 0 && records[order[j - 1]].accuracy < records[order[j]].accuracy {
                    order.swap(j - 1, j);
                    j -= 1;
                }
            }
            let expected: Vec<(usize, usize)> =
                order[..k].iter().map(|&i| (records[i].layer, records[i].head)).collect();
            let table = ProbeTable {
                n_layers: nl,
                n_heads: nh,
                records,
            };
            let got = select_topk_heads(&table, k).unwrap();
            ensure(got == expected, || format!("top-k mismatch on random table {trial}"))?;
        }
        Ok(format!(
            "min accuracy {worst_acc:.3} over 12 heads; max |norm-1| {worst_norm:.1e}; 200 top-k tables match"
        ))
    };
    report(4, "ITI probes and head selection", run());
}

#[test]
fn criterion_05_pasta() {
    let run = || -> Verdict {
        let mut rng = Rng::new(99);
        let mut worst_sum = 0.0f64;
        let mut worst_ratio = 0.0f64;
        for _ in 0..200 {
            let (h, n) = (1 + rng.below(4) as usize, 2 + rng.below(12) as usize);
            let mut data = Vec::with_capacity(h * n * n);
            for _ in 0..h * n {
                let row: Vec<f64> = (0..n).map(|_| rng.normal().exp()).collect();
                let z: f64 = row.iter().sum();
                data.extend(row.iter().map(|x| (x / z) as f32));
            }
            let attn = Tensor::new(vec![h, n, n], data).unwrap();
            let span: Vec<usize> = (0..n).filter(|_| rng.below(3) == 0).collect();
            let alpha = 0.1 + 30.0 * rng.next_f64() as f32;
            let pos = if rng.below(2) == 0 { ScalePosition::Include } else { ScalePosition::Exclude };
            let heads: Vec<usize> = (0..h).collect();
            let out = pasta_rescale(&attn, &heads, &span, alpha, pos).unwrap();
            for r in 0..h * n {
                let row = out.row(r);
                let before = attn.row(r);
                worst_sum = worst_sum.max((row.iter().map(|&x| f64::from(x)).sum::<f64>() - 1.0).abs());
                for &i in &span {
                    for &j in &span {
                        let a = f64::from(before[i]) / f64::from(before[j]);
                        let b = f64::from(row[i]) / f64::from(row[j]);
                        worst_ratio = worst_ratio.max((a - b).abs() / a.max(1.0));
                    }
                }
            }
        }
        ensure(worst_sum <= 1e-6, || format!("row sum off by {worst_sum:e}"))?;
        ensure(worst_ratio <= 1e-6, || format!("within-span ratio off by {worst_ratio:e}"))?;

        let model = wide_model(7);
        let cfg = model.config().clone();
        let head_config: Vec<usize> = (8..24).collect();
        let mut pasta = Pasta::new(
            "PASTA",
            PastaParams {
                head_config: head_config.clone(),
                scale_position: ScalePosition::Include,
                alpha: 5.0,
                substrings: vec![PASTA_SUBSTRING.into()],
            },
        )
        .unwrap();
        pasta.steer(&model).unwrap();
        let hooks = pasta.hooks();
        let data = load_datapoints(&data_dir().join("ifeval_fixture.json")).unwrap();
        let (mut rows, mut raised) = (0usize, 0usize);
        for dp in &data {
            let ids = encode_prompt(&dp.prompt);
            let prepared = pasta.prepare(&dp.prompt, &ParamMap::new()).unwrap();
            let span: Vec<usize> = prepared[SPAN_POSITIONS_KEY]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as usize)
                .collect();
            let overrides: ResolvedOverrides = BTreeMap::from([("PASTA".to_owned(), prepared)]);
            let base = forward(&model, &ids, &[], &StepContext::standalone(ids.len())).unwrap();
            let steered = forward(&model, &ids, &hooks, &StepContext::prefill(ids.len(), Arc::new(overrides))).unwrap();
            for &g in &head_config {
                let (layer, head) = (g / cfg.n_heads, g % cfg.n_heads);
                let n = ids.len();
                for q in 0..n {
                    let visible = q + 1;
                    let in_span = span.iter().filter(|&&p| p < visible).count();
                    if in_span == 0 || in_span == visible {
                        continue;
                    }
                    let mass = |t: &Tensor| -> f64 {
                        let row = t.row(head * n + q);
                        span.iter().filter(|&&p| p < visible).map(|&p| f64::from(row[p])).sum()
                    };
                    rows += 1;
                    if mass(&steered.attn[layer]) > mass(&base.attn[layer]) {
                        raised += 1;
                    }
                }
            }
        }
        let frac = raised as f64 / rows as f64;
        ensure(rows > 0 && frac >= 0.95, || format!("span mass raised on {raised}/{rows} rows"))?;
        Ok(format!(
            "max |row sum-1| {worst_sum:.1e}, max ratio drift {worst_ratio:.1e}; alpha=5 on heads 8..24 raised span mass on {raised}/{rows} rows ({:.1}%)",
            100.0 * frac
        ))
    };
    report(5, "PASTA", run());
}

#[test]
fn criterion_06_deal_degeneration() {
    let run = || -> Verdict {
        let model = reference_model(4);
        let none = RuntimeOverrides::new();
        for prompt in random_prompts(10, 30, 6) {
            let deal = Deal::new(
                "DeAL",
                DealParams {
                    beam_width: 1,
                    expansions_per_beam: 1,
                    lookahead_len: 1,
                    max_rounds: 64,
                    reward: Reward::Keyword {
                        keywords: vec!["the".into()],
                    },
                },
            )
            .unwrap();
            let out = pipeline_greedy(&model, vec![Control::output(deal)], &prompt, 10, &none);
            ensure(out == baseline_greedy(&model, &prompt, 10), || format!("k=1,b=1 diverged on {prompt:?}"))?;
        }
        const VOCAB: &[u32] = &[97, 101, 105, 111, 117, 32];
        let hooks = vec![restrict_vocab(VOCAB)];
        let mut instances = 0;
        for seed in 0..3 {
            let model = reference_model(seed);
            for prompt in ["Answer:", "Q: pick one"] {
                let ids = encode_prompt(prompt);
                for (k, b, l) in [(2, 2, 1), (3, 3, 1), (2, 3, 2), (4, 2, 3)] {
                    let got = deal_generate(
                        &model,
                        &ids,
                        &Reward::Constant { value: 1.0 },
                        &LookaheadParams::new(k, b, l, 64).unwrap(),
                        &GenParams::greedy(3).unwrap(),
                        &hooks,
                        &Arc::default(),
                        &ParamMap::new(),
                    )
                    .unwrap();
                    let want = beam_oracle(&model, &ids, &hooks, k, b, l, 3);
                    ensure(got == want, || format!("seed {seed} {prompt:?} k={k} b={b} l={l}: {got:?} vs {want:?}"))?;
                    instances += 1;
                }
            }
        }
        Ok(format!("k=1,b=1 greedy on 10 prompts; {instances} depth-3 instances match the beam oracle"))
    };
    report(6, "DeAL degeneration", run());
}

#[test]
fn criterion_07_instruction_checkers() {
    let run = || -> Verdict {
        let kw = json!({"keywords": ["correlated", "experiencing"]});
        let len = json!({"relation": "at least", "num_words": 500});
        let empty = json!({});
        let words = |n: usize| vec!["w"; n].join(" ");
        let cases: Vec<(&str, &serde_json::Value, String, bool)> = vec![
            ("punctuation:no_comma", &empty, "hello world".into(), true),
            ("punctuation:no_comma", &empty, "a, b".into(), false),
            ("keywords:existence", &kw, "Correlated events I am experiencing".into(), true),
            ("keywords:existence", &kw, "correlated only".into(), false),
            ("length_constraints:number_words", &len, words(499), false),
            ("length_constraints:number_words", &len, words(500), true),
        ];
        for (id, args, text, want) in &cases {
            let got = check_instruction(id, args, text).map_err(|e| e.to_string())?;
            ensure(got == *want, || format!("{id} returned {got}"))?;
        }
        let dp = serde_json::from_value(json!({
            "id": "dp-1",
            "prompt": "p",
            "instructions": ["k", "n", "c"],
            "instruction_id_list": ["keywords:existence", "length_constraints:number_words", "punctuation:no_comma"],
            "kwargs": [kw, {"relation": "at least", "num_words": 3}, {}]
        }))
        .unwrap();
        let responses = [
            ("correlated and experiencing", 3),
            ("correlated, experiencing things", 2),
            ("nothing", 1),
            ("short, text", 0),
        ];
        let gens: Vec<Generation> = responses
            .iter()
            .map(|(r, _)| Generation {
                pipeline: "baseline".into(),
                params: ParamMap::new(),
                datapoint_id: "dp-1".into(),
                trial: 0,
                adapted_prompt: "p".into(),
                response: (*r).into(),
                response_ids: tokenize(r),
            })
            .collect();
        let res = StrictInstruction.score(&gens, &[dp]).map_err(|e| e.to_string())?;
        ensure(res[0].scores == [1.0, 0.0, 0.0, 0.0] && res[0].mean == 0.25, || {
            format!("prompt level {:?}", res[0].scores)
        })?;
        let fracs = [1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0];
        ensure(res[1].scores == fracs && res[1].mean == fracs.iter().sum::<f64>() / 4.0, || {
            format!("instruction level {:?}", res[1].scores)
        })?;
        Ok("6 checker cases and both StrictInstruction aggregates exact".into())
    };
    report(7, "instruction checkers", run());
}

#[test]
fn criterion_08_benchmark_machinery() {
    let run = || -> Verdict {
        let path = data_dir().join("benchmark_pasta_sweep.json");
        let cfg = BenchmarkConfig::load(&path).map_err(|e| e.to_string())?;
        let start = Instant::now();
        let table = Benchmark::from_config(&cfg).and_then(|b| b.run()).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
        ensure(table.metadata.errors.is_empty(), || format!("errors: {:?}", table.metadata.errors))?;

        let datapoints = load_datapoints(&cfg.data_path()).unwrap().len();
        let configs: usize = cfg
            .steering_pipelines
            .values()
            .map(|entries| entries.iter().map(|e| e.expand().unwrap().len()).product::<usize>())
            .sum();
        let model = Arc::new(reference_model(0));
        let series: usize = cfg.metrics.iter().map(|m| m.build(&model).series().len()).sum();
        let expected = configs * datapoints * cfg.num_trials * series;
        ensure(table.rows.len() == expected, || format!("{} rows, formula gives {expected}", table.rows.len()))?;
        ensure(configs == 7 && datapoints == 12 && cfg.num_trials == 10, || "config shape changed".into())?;

        let dir = tempfile::tempdir().unwrap();
        table.export(&dir.path().join("a")).unwrap();
        let again = Benchmark::from_config(&cfg).and_then(|b| b.run()).unwrap();
        again.export(&dir.path().join("b")).unwrap();
        for file in ["results.csv", "results.jsonl"] {
            let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
            ensure(a == b, || format!("{file} differs between reruns"))?;
        }
        let mut single = cfg.clone();
        single.workers = 1;
        let serial = Benchmark::from_config(&single).and_then(|b| b.run()).unwrap();
        ensure(serial.to_csv().unwrap() == table.to_csv().unwrap(), || "workers=1 and workers=4 differ".into())?;
        let read_back = ResultTable::read(&dir.path().join("a")).unwrap();
        ensure(read_back.rows.len() == expected, || "exported row count differs".into())?;
        Ok(format!(
            "{expected} rows = {configs} configs x {datapoints} datapoints x {} trials x {series} series in {elapsed:.2?}; reruns byte-identical; workers 1 == 4",
            cfg.num_trials
        ))
    };
    report(8, "benchmark machinery", run());
}

#[test]
fn criterion_09_pareto_frontier() {
    let run = || -> Verdict {
        let mut rng = Rng::new(31);
        for set in 0..100 {
            let points: Vec<(f64, f64)> = (0..50)
                .map(|_| (rng.below(16) as f64 / 8.0, rng.below(16) as f64 / 8.0))
                .collect();
            let mut oracle: Vec<usize> = (0..points.len())
                .filter(|&i| {
                    !points.iter().any(|&(x, y)| {
                        x >= points[i].0 && y >= points[i].1 && (x > points[i].0 || y > points[i].1)
                    })
                })
                .collect();
            oracle.sort_by(|&a, &b| {
                points[a]
                    .0
                    .total_cmp(&points[b].0)
                    .then(points[a].1.total_cmp(&points[b].1))
                    .then(a.cmp(&b))
            });
            ensure(pareto_frontier(&points) == oracle, || format!("set {set} differs"))?;
        }
        Ok("100 random 50-point sets match the O(n^2) oracle exactly".into())
    };
    report(9, "Pareto frontier", run());
}

#[test]
fn criterion_10_weight_format() {
    let run = || -> Verdict {
        let model = reference_model(12);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.stw");
        save_weights(&model, &path).unwrap();
        let disk = std::fs::read(&path).unwrap();
        let back = load_weights(&path).unwrap();
        let bitwise = model
            .weights()
            .iter()
            .zip(back.weights())
            .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape() && a.to_le_bytes() == b.to_le_bytes());
        ensure(bitwise && back.config() == model.config(), || "round trip not bitwise".into())?;

        let mut rng = Rng::new(3);
        let mut delta = BTreeMap::new();
        for name in ["layers.1.wv", "unembed"] {
            let shape = model.weights()[name].shape().to_vec();
            let n: usize = shape.iter().product();
            delta.insert(name.to_owned(), Tensor::new(shape, (0..n).map(|_| 0.01 * rng.normal() as f32).collect()).unwrap());
        }
        let s1 = apply_task_vector(model.weights(), &delta, 0.7).unwrap();
        let s2 = apply_task_vector(model.weights(), &delta, 1.4).unwrap();
        let mut worst = 0.0f64;
        for (name, base) in model.weights() {
            for ((b, x), y) in base.data().iter().zip(s1[name].data()).zip(s2[name].data()) {
                let (b, x, y) = (f64::from(*b), f64::from(*x), f64::from(*y));
                worst = worst.max((2.0 * (x - b) - (y - b)).abs());
            }
        }
        ensure(worst <= 1e-6, || format!("scale linearity off by {worst:e}"))?;

        let before = model.checksum();
        let tv = TaskVector::new("TaskVector", TaskVectorParams { scale: 1.0 }, delta);
        let mut pipeline = SteeringPipeline::new(&model, vec![Control::structural(tv)]).unwrap();
        pipeline.steer().unwrap();
        ensure(model.checksum() == before && pipeline.model().checksum() != before, || {
            "source model changed or steering had no effect".into()
        })?;
        let mut from_disk =
            SteeringPipeline::new(path.clone(), vec![Control::structural(TaskVector::new(
                "TaskVector",
                TaskVectorParams { scale: 1.0 },
                BTreeMap::from([("final_norm".to_owned(), Tensor::full(&[64], 0.5))]),
            ))])
            .unwrap();
        from_disk.steer().unwrap();
        ensure(std::fs::read(&path).unwrap() == disk, || "model file changed on disk".into())?;
        Ok(format!("{} tensors bitwise; linearity error {worst:.1e}; source checksum unchanged", back.weights().len()))
    };
    report(10, "weight format and structural steering", run());
}

fn composite_pipeline(model: &steerbench_core::Model, alpha: f64, beam: usize) -> SteeringPipeline {
    let value = json!({"controls": [
        {"control": "PASTA", "params": {
            "head_config": (8..24).collect::<Vec<_>>(),
            "alpha": alpha,
            "substrings": [PASTA_SUBSTRING]
        }},
        {"control": "DeAL", "params": {
            "beam_width": beam, "expansions_per_beam": beam, "lookahead_len": if beam == 1 { 1 } else { 2 },
            "max_rounds": 16,
            "reward": {"kind": "keyword", "keywords": ["e", "a"]}
        }}
    ]});
    let controls = PipelineConfig::from_value(value, data_dir()).unwrap().build().unwrap();
    let mut p = SteeringPipeline::new(model, controls).unwrap();
    p.steer().unwrap();
    p
}

fn single_pipeline(model: &steerbench_core::Model, control: serde_json::Value) -> SteeringPipeline {
    let controls = PipelineConfig::from_value(json!({"controls": [control]}), data_dir())
        .unwrap()
        .build()
        .unwrap();
    let mut p = SteeringPipeline::new(model, controls).unwrap();
    p.steer().unwrap();
    p
}

#[test]
fn criterion_11_composite_steering() {
    let run = || -> Verdict {
        let model = wide_model(7);
        let data = load_datapoints(&data_dir().join("ifeval_fixture.json")).unwrap();
        let gen = GenParams::greedy(10).unwrap();
        let none = RuntimeOverrides::new();
        let composite = composite_pipeline(&model, 5.0, 2);
        let no_deal = composite_pipeline(&model, 5.0, 1);
        let no_pasta = composite_pipeline(&model, 1.0, 2);
        let pasta_only = single_pipeline(
            &model,
            json!({"control": "PASTA", "params": {
                "head_config": (8..24).collect::<Vec<_>>(), "alpha": 5.0, "substrings": [PASTA_SUBSTRING]}}),
        );
        let deal_only = single_pipeline(
            &model,
            json!({"control": "DeAL", "params": {
                "beam_width": 2, "expansions_per_beam": 2, "lookahead_len": 2, "max_rounds": 16,
                "reward": {"kind": "keyword", "keywords": ["e", "a"]}}}),
        );
        let mut differs = 0;
        for dp in data.iter().take(6) {
            let g = |p: &SteeringPipeline| p.generate(&dp.prompt, &gen, &none, None).map(|o| o.ids);
            let both = g(&composite).map_err(|e| e.to_string())?;
            ensure(g(&no_deal).unwrap() == g(&pasta_only).unwrap(), || format!("{}: DeAL disabled != PASTA only", dp.id))?;
            ensure(g(&no_pasta).unwrap() == g(&deal_only).unwrap(), || format!("{}: PASTA disabled != DeAL only", dp.id))?;
            if both != g(&pasta_only).unwrap() || both != g(&deal_only).unwrap() {
                differs += 1;
            }
        }
        Ok(format!(
            "PASTA+DeAL ran on 6 fixture prompts; disabling either control reproduced the other exactly; composite differed from a single control on {differs}/6"
        ))
    };
    report(11, "composite steering", run());
}
