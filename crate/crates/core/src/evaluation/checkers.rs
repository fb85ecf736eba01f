// SPDX-License-Identifier: MIT OR Apache-2.0

use serde_json::Value;

use crate::error::{Error, Result};

pub const KEYWORDS_EXISTENCE: &str = "keywords:existence";
pub const NUMBER_WORDS: &str = "length_constraints:number_words";
pub const NO_COMMA: &str = "punctuation:no_comma";

/// Checker ids understood by [`check_instruction`].
pub const CHECKERS: &[&str] = &[KEYWORDS_EXISTENCE, NUMBER_WORDS, NO_COMMA];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Relation {
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Check {
    Keywords(Vec<String>),
    NumberWords(Relation, usize),
    NoComma,
}

fn kwargs_error(checker: &str, message: impl Into<String>) -> Error {
    Error::Kwargs {
        checker: checker.to_owned(),
        message: message.into(),
    }
}

fn parse(checker: &str, kwargs: &Value) -> Result<Check> {
    let obj = match kwargs {
        Value::Object(o) => o,
        Value::Null => &serde_json::Map::new(),
        other => return Err(kwargs_error(checker, format!("expected an object, got {other}"))),
    };
    let allow = |keys: &[&str]| -> Result<()> {
        match obj.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(kwargs_error(checker, format!("unexpected key `{k}`"))),
            None => Ok(()),
        }
    };
    match checker {
        KEYWORDS_EXISTENCE => {
            allow(&["keywords"])?;
            let list = obj
                .get("keywords")
                .and_then(Value::as_array)
                .ok_or_else(|| kwargs_error(checker, "`keywords` must be a list"))?;
            let words = list
                .iter()
                .map(|k| k.as_str().map(str::to_owned))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| kwargs_error(checker, "keywords must be strings"))?;
            Ok(Check::Keywords(words))
        }
        NUMBER_WORDS => {
            allow(&["relation", "num_words"])?;
            let relation = match obj.get("relation").and_then(Value::as_str) {
                Some("at least") => Relation::AtLeast,
                Some("at most") => Relation::AtMost,
                other => {
                    return Err(kwargs_error(
                        checker,
                        format!("relation must be \"at least\" or \"at most\", got {other:?}"),
                    ))
                }
            };
            let n = obj
                .get("num_words")
                .and_then(Value::as_u64)
                .ok_or_else(|| kwargs_error(checker, "`num_words` must be a nonnegative integer"))?;
            Ok(Check::NumberWords(relation, n as usize))
        }
        NO_COMMA => {
            allow(&[])?;
            Ok(Check::NoComma)
        }
        other => Err(Error::Registry(format!("checker `{other}`"))),
    }
}

/// Checks the id and kwargs without evaluating a response.
pub fn validate_instruction(checker: &str, kwargs: &Value) -> Result<()> {
    parse(checker, kwargs).map(|_| ())
}

/// Whether `response` satisfies one verifiable instruction.
pub fn check_instruction(checker: &str, kwargs: &Value, response: &str) -> Result<bool> {
    Ok(match parse(checker, kwargs)? {
        Check::Keywords(words) => {
            let lower = response.to_lowercase();
            words.iter().all(|w| lower.contains(&w.to_lowercase()))
        }
        Check::NumberWords(rel, n) => {
            let count = response.split_whitespace().count();
            match rel {
                Relation::AtLeast => count >= n,
                Relation::AtMost => count <= n,
            }
        }
        Check::NoComma => !response.contains(','),
    })
}
