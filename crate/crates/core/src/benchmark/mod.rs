// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pipeline comparison, sweeps, result tables and tradeoff plots.

mod config;
mod pareto;
mod plot;
mod run;
mod table;

pub use config::{BenchmarkConfig, MetricSpec, ModelSpec};
pub use pareto::pareto_frontier;
pub use plot::{render_tradeoff_svg, tradeoff_points, write_tradeoff_svg, PlotPoint};
pub use run::{expand_pipelines, run_benchmark, Benchmark, WorkUnit};
pub use table::{
    ConfigAggregate, ConfigError, ConfigSummary, Metadata, ResultRow, ResultTable, METADATA_JSON, RESULTS_CSV,
    RESULTS_JSONL,
};
