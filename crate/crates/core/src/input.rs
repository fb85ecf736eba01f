// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt adapters.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::InputControl;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Placed between adapted segments.
pub const SEPARATOR: &str = "\n\n";

pub const DEFAULT_TEMPLATE: &str = "Input: {input}\nOutput: {output}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub input: String,
    pub output: String,
}

/// Demonstrations plus the template that renders them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExamplePool {
    examples: Vec<Example>,
    template: String,
}

impl ExamplePool {
    pub fn new(examples: Vec<Example>, template: impl Into<String>) -> Self {
        Self {
            examples,
            template: template.into(),
        }
    }

    /// Reads `{"input", "output"}` JSON lines with the default template.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(crate::jsonl::read_jsonl(path)?, DEFAULT_TEMPLATE))
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn render(&self, e: &Example) -> String {
        self.template.replace("{input}", &e.input).replace("{output}", &e.output)
    }
}

fn check_k(pool: &ExamplePool, k: usize) -> Result<()> {
    if k > pool.len() {
        return Err(Error::PoolExhausted {
            requested: k,
            available: pool.len(),
        });
    }
    Ok(())
}

/// Prepends `k` examples drawn without replacement, in sampled order.
pub fn few_shot_adapt(prompt: &str, pool: &ExamplePool, k: usize, seed: u64) -> Result<String> {
    check_k(pool, k)?;
    if k == 0 {
        return Ok(prompt.to_owned());
    }
    let mut parts: Vec<String> = Rng::new(seed)
        .sample_indices(pool.len(), k)
        .into_iter()
        .map(|i| pool.render(&pool.examples[i]))
        .collect();
    parts.push(prompt.to_owned());
    Ok(parts.join(SEPARATOR))
}

pub fn prefix_adapt(prompt: &str, prefix: &str) -> String {
    if prefix.is_empty() {
        prompt.to_owned()
    } else {
        format!("{prefix}{SEPARATOR}{prompt}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotParams {
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub template: Option<String>,
}

/// Few-shot prompting with a uniform random selector.
#[derive(Debug, Clone)]
pub struct FewShot {
    name: String,
    params: FewShotParams,
    pool: ExamplePool,
}

impl FewShot {
    pub fn new(name: impl Into<String>, params: FewShotParams, pool: ExamplePool) -> Self {
        let pool = match &params.template {
            Some(t) => pool.with_template(t.clone()),
            None => pool,
        };
        Self {
            name: name.into(),
            params,
            pool,
        }
    }
}

impl InputControl for FewShot {
    fn name(&self) -> &str {
        &self.name
    }

    fn steer(&mut self) -> Result<()> {
        check_k(&self.pool, self.params.k)
    }

    fn adapt(&self, prompt: &str) -> Result<String> {
        few_shot_adapt(prompt, &self.pool, self.params.k, self.params.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrefixParams {
    pub prefix: String,
}

/// Static system-prompt style prefix.
#[derive(Debug, Clone)]
pub struct Prefix {
    name: String,
    prefix: String,
}

impl Prefix {
    pub fn new(name: impl Into<String>, params: PrefixParams) -> Self {
        Self {
            name: name.into(),
            prefix: params.prefix,
        }
    }
}

impl InputControl for Prefix {
    fn name(&self) -> &str {
        &self.name
    }

    fn adapt(&self, prompt: &str) -> Result<String> {
        Ok(prefix_adapt(prompt, &self.prefix))
    }
}
