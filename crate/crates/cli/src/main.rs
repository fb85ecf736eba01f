// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use steerbench_core::benchmark::{write_tradeoff_svg, tradeoff_points, Benchmark, BenchmarkConfig, ResultTable};
use steerbench_core::control::PipelineConfig;
use steerbench_core::runtime::{init_random, load_weights, save_weights, tensor_checksum};
use steerbench_core::{Error, GenParams, ModelConfig, RuntimeOverrides, SteeringPipeline};

const EXIT_INPUT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_ALL_FAILED: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "steerbench", version, about = "Steer a small language model and benchmark the controls")]
struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a randomly initialized model.
    ModelInit {
        /// JSON model config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "STEERBENCH_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a model's config and per-tensor checksums.
    ModelInfo {
        #[arg(long)]
        model: PathBuf,
    },
    /// Steer a pipeline and generate one response.
    Run {
        #[arg(long)]
        model: PathBuf,
        /// Pipeline config: `{"controls": [...]}`.
        #[arg(long)]
        pipeline: PathBuf,
        /// Prompt text, or `@path` to read it from a file.
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 64)]
        max_new_tokens: usize,
        #[arg(long, env = "STEERBENCH_SEED", default_value_t = 0)]
        seed: u64,
        /// Sample at this temperature instead of decoding greedily.
        #[arg(long)]
        temperature: Option<f32>,
        /// Runtime overrides as JSON, or `@path`.
        #[arg(long)]
        overrides: Option<String>,
        /// Datapoint JSON that field overrides resolve against, or `@path`.
        #[arg(long)]
        datapoint: Option<String>,
    },
    /// Run a benchmark config and export its results.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the config's generation seed.
        #[arg(long, env = "STEERBENCH_SEED")]
        seed: Option<u64>,
    },
    /// Render the tradeoff plot from exported results.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Defaults to `<results>/tradeoff.svg`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn input(e: Error) -> Failure {
    Failure::new(EXIT_INPUT, e.to_string())
}

fn config(e: Error) -> Failure {
    Failure::new(EXIT_CONFIG, e.to_string())
}

fn runtime(e: Error) -> Failure {
    Failure::new(EXIT_RUNTIME, e.to_string())
}

/// Input-shaped errors (unreadable or corrupt files) keep code 1.
fn loading(e: Error, otherwise: u8) -> Failure {
    let code = match e {
        Error::Io { .. } | Error::Format { .. } | Error::Decode(_) => EXIT_INPUT,
        _ => otherwise,
    };
    Failure::new(code, e.to_string())
}

fn text_arg(arg: &str) -> Result<String, Failure> {
    match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {path}: {e}"))),
        None => Ok(arg.to_owned()),
    }
}

fn json_arg(arg: &str, what: &str) -> Result<Value, Failure> {
    serde_json::from_str(&text_arg(arg)?).map_err(|e| Failure::new(EXIT_INPUT, format!("{what}: {e}")))
}

fn emit(json_mode: bool, value: &Value, plain: impl FnOnce() -> String) {
    if json_mode {
        println!("{value}");
    } else {
        print!("{}", plain());
    }
}

fn model_init(config_path: &Path, seed: u64, out: &Path, json_mode: bool) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", config_path.display())))?;
    let cfg: ModelConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", config_path.display())))?;
    let model = init_random(&cfg, seed).map_err(input)?;
    save_weights(&model, out).map_err(input)?;
    let checksum = model.checksum();
    let value = json!({"path": out, "seed": seed, "checksum": checksum, "tensors": model.weights().len()});
    emit(json_mode, &value, || format!("wrote {} ({} tensors, checksum {checksum})\n", out.display(), model.weights().len()));
    Ok(())
}

fn model_info(path: &Path, json_mode: bool) -> Result<(), Failure> {
    let model = load_weights(path).map_err(input)?;
    let tensors: Vec<Value> = model
        .weights()
        .iter()
        .map(|(name, t)| json!({"name": name, "shape": t.shape(), "checksum": tensor_checksum(t)}))
        .collect();
    let value = json!({
        "config": model.config(),
        "checksum": model.checksum(),
        "tensors": tensors,
    });
    emit(json_mode, &value, || {
        let mut s = format!(
            "config: {}\nchecksum: {}\ntensors: {}\n",
            serde_json::to_string(model.config()).unwrap_or_default(),
            model.checksum(),
            model.weights().len()
        );
        for (name, t) in model.weights() {
            s.push_str(&format!("  {name} {:?} {}\n", t.shape(), tensor_checksum(t)));
        }
        s
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run(
    model_path: &Path,
    pipeline_path: &Path,
    prompt: &str,
    max_new_tokens: usize,
    seed: u64,
    temperature: Option<f32>,
    overrides: Option<&str>,
    datapoint: Option<&str>,
    json_mode: bool,
) -> Result<(), Failure> {
    let prompt = text_arg(prompt)?;
    let model = load_weights(model_path).map_err(input)?;
    let pipeline_cfg = PipelineConfig::load(pipeline_path).map_err(config)?;
    let overrides: RuntimeOverrides = match overrides {
        Some(o) => serde_json::from_value(json_arg(o, "overrides")?)
            .map_err(|e| Failure::new(EXIT_CONFIG, format!("overrides: {e}")))?,
        None => RuntimeOverrides::new(),
    };
    let datapoint = datapoint.map(|d| json_arg(d, "datapoint")).transpose()?;
    let params = match temperature {
        Some(t) => GenParams::sampled(max_new_tokens, t, seed),
        None => GenParams::greedy(max_new_tokens).map(|p| p.with_seed(seed)),
    }
    .map_err(config)?;
    let controls = pipeline_cfg.build().map_err(|e| loading(e, EXIT_CONFIG))?;
    let mut pipeline = SteeringPipeline::new(model, controls).map_err(config)?;
    let t0 = Instant::now();
    pipeline.steer().map_err(runtime)?;
    let steer_ms = t0.elapsed().as_secs_f64() * 1e3;
    let t1 = Instant::now();
    let out = pipeline
        .generate(&prompt, &params, &overrides, datapoint.as_ref())
        .map_err(|e| match e {
            Error::Override(_) => config(e),
            other => runtime(other),
        })?;
    let generate_ms = t1.elapsed().as_secs_f64() * 1e3;
    let value = json!({
        "prompt": prompt,
        "adapted_prompt": out.adapted_prompt,
        "response": out.text,
        "ids": out.ids,
        "timing": {"steer_ms": steer_ms, "generate_ms": generate_ms},
    });
    emit(json_mode, &value, || format!("{}\n", out.text));
    Ok(())
}

fn benchmark(
    config_path: &Path,
    out: &Path,
    workers: Option<usize>,
    seed: Option<u64>,
    json_mode: bool,
) -> Result<(), Failure> {
    let mut cfg = BenchmarkConfig::load(config_path).map_err(config)?;
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure::new(EXIT_INPUT, "--workers must be at least 1"));
        }
        cfg.workers = w;
    }
    if let Some(s) = seed {
        cfg.gen = cfg.gen.with_seed(s);
    }
    let bench = Benchmark::from_config(&cfg).map_err(|e| loading(e, EXIT_CONFIG))?;
    let table = bench.run().map_err(|e| loading(e, EXIT_CONFIG))?;
    table.export(out).map_err(runtime)?;
    let meta = &table.metadata;
    let failed = meta.configs.iter().filter(|c| !c.ok).count();
    let errors: Vec<Value> = meta
        .errors
        .iter()
        .map(|e| json!({"pipeline": e.pipeline, "params": e.params, "message": e.message}))
        .collect();
    let value = json!({
        "out": out,
        "rows": table.rows.len(),
        "configs": meta.configs.len(),
        "failed": failed,
        "errors": errors,
    });
    emit(json_mode, &value, || {
        let mut s = format!(
            "{} configs, {failed} failed, {} rows written to {}\n",
            meta.configs.len(),
            table.rows.len(),
            out.display()
        );
        for e in &meta.errors {
            s.push_str(&format!("  {} {}: {}\n", e.pipeline, Value::from(e.params.clone().into_iter().collect::<serde_json::Map<_, _>>()), e.message));
        }
        s
    });
    if failed == meta.configs.len() {
        return Err(Failure::new(EXIT_ALL_FAILED, "every configuration failed"));
    }
    Ok(())
}

fn report(results: &Path, x: &str, y: &str, out: Option<&Path>, json_mode: bool) -> Result<(), Failure> {
    let table = ResultTable::read(results).map_err(input)?;
    let path = out.map(Path::to_owned).unwrap_or_else(|| results.join("tradeoff.svg"));
    let points = tradeoff_points(&table, x, y).map_err(input)?;
    write_tradeoff_svg(&table, x, y, &path).map_err(runtime)?;
    let pts: Vec<Value> = points
        .iter()
        .map(|p| json!({"label": p.label, "x": p.x, "y": p.y, "baseline": p.baseline}))
        .collect();
    let value = json!({"svg": path, "points": pts});
    emit(json_mode, &value, || format!("wrote {} ({} points)\n", path.display(), points.len()));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let j = cli.json;
    match cli.command {
        Command::ModelInit { config, seed, out } => model_init(&config, seed, &out, j),
        Command::ModelInfo { model } => model_info(&model, j),
        Command::Run {
            model,
            pipeline,
            prompt,
            max_new_tokens,
            seed,
            temperature,
            overrides,
            datapoint,
        } => run(
            &model,
            &pipeline,
            &prompt,
            max_new_tokens,
            seed,
            temperature,
            overrides.as_deref(),
            datapoint.as_deref(),
            j,
        ),
        Command::Benchmark {
            config,
            out,
            workers,
            seed,
        } => benchmark(&config, &out, workers, seed, j),
        Command::Report { results, x, y, out } => report(&results, &x, &y, out.as_deref(), j),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let json_mode = cli.json;
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if json_mode {
                println!("{}", json!({"error": f.message, "exit_code": f.code}));
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
