// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::control::{RuntimeOverrides, SteeringPipeline};
use crate::error::{Error, Result};
use crate::evaluation::{validate_datapoints, DataPoint, Generation, Metric, MetricResult};
use crate::runtime::GenParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFailure {
    pub metric: String,
    pub message: String,
}

/// Outcome of evaluating every metric; one metric failing does not stop
/// the others.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub results: Vec<MetricResult>,
    pub failures: Vec<MetricFailure>,
}

impl MetricReport {
    pub fn get(&self, metric: &str) -> Option<&MetricResult> {
        self.results.iter().find(|r| r.metric == metric)
    }
}

/// Evaluation data plus how it maps to model outputs and scores.
pub trait UseCase: Send + Sync {
    fn name(&self) -> &str;

    fn data(&self) -> &[DataPoint];

    fn metrics(&self) -> &[Box<dyn Metric>];

    /// One generation per datapoint and trial, datapoint-major. Trial `t`
    /// decodes with seed `gen.seed + t`.
    fn generate(
        &self,
        pipeline: &SteeringPipeline,
        overrides: &RuntimeOverrides,
        num_trials: usize,
        gen: &GenParams,
    ) -> Result<Vec<Generation>> {
        if num_trials == 0 {
            return Err(Error::Config("num_trials must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(self.data().len() * num_trials);
        for dp in self.data() {
            let value = dp.to_value();
            for trial in 0..num_trials {
                let params = gen.with_seed(gen.seed().wrapping_add(trial as u64));
                let g = pipeline.generate(&dp.prompt, &params, overrides, Some(&value))?;
                out.push(Generation {
                    pipeline: String::new(),
                    params: Default::default(),
                    datapoint_id: dp.id.clone(),
                    trial,
                    adapted_prompt: g.adapted_prompt,
                    response: g.text,
                    response_ids: g.ids,
                });
            }
        }
        Ok(out)
    }

    fn evaluate(&self, generations: &[Generation]) -> MetricReport {
        let mut report = MetricReport::default();
        for m in self.metrics() {
            match m.score(generations, self.data()) {
                Ok(rs) => report.results.extend(rs),
                Err(e) => report.failures.push(MetricFailure {
                    metric: m.name().to_owned(),
                    message: e.to_string(),
                }),
            }
        }
        report
    }
}

/// Verifiable instruction following.
pub struct InstructionFollowing {
    data: Vec<DataPoint>,
    metrics: Vec<Box<dyn Metric>>,
}

impl InstructionFollowing {
    pub fn new(data: Vec<DataPoint>, metrics: Vec<Box<dyn Metric>>) -> Result<Self> {
        validate_datapoints(&data)?;
        Ok(Self { data, metrics })
    }
}

impl UseCase for InstructionFollowing {
    fn name(&self) -> &str {
        "InstructionFollowing"
    }

    fn data(&self) -> &[DataPoint] {
        &self.data
    }

    fn metrics(&self) -> &[Box<dyn Metric>] {
        &self.metrics
    }
}

/// Generates for every datapoint and trial, then scores.
pub fn usecase_run(
    use_case: &dyn UseCase,
    pipeline: &SteeringPipeline,
    overrides: &RuntimeOverrides,
    num_trials: usize,
    gen: &GenParams,
) -> Result<(Vec<Generation>, MetricReport)> {
    let generations = use_case.generate(pipeline, overrides, num_trials, gen)?;
    let report = use_case.evaluate(&generations);
    Ok((generations, report))
}
