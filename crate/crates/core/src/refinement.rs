//! Confidence-gated self-refinement: ask the same question repeatedly, feed
//! earlier answers back as context, and stop when the model is unsure, stops
//! changing its answer, or the round budget runs out.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_gateway::{ChatMessage, ChatModel, GatewayError};
use crate::prompt_registry::{ids, PromptError, PromptRegistry};
use crate::text_metrics;

pub const DEFAULT_MAX_ROUNDS: usize = 10;
pub const DEFAULT_THRESHOLD: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum ConfidenceError {
    #[error("reply carries no 'Confidence: X%' marker")]
    NoConfidence,
    #[error("confidence {0} is outside [0, 100]")]
    OutOfRange(f64),
}

#[derive(Debug, Error)]
pub enum RefinementError {
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
    #[error("threshold {0} is outside [0, 100]")]
    BadThreshold(f64),
    #[error("round {round}: {source}")]
    Gateway {
        round: usize,
        #[source]
        source: GatewayError,
        /// Rounds completed before the failure.
        partial: Vec<IterationRecord>,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

fn confidence_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)confidence(?:\s+score)?\s*:\s*(?:\*\*)?\s*(-?\d+(?:\.\d+)?)\s*%").unwrap()
    })
}

/// The last "Confidence: X%" in `text`, as a percentage.
pub fn parse_confidence(text: &str) -> Result<f64, ConfidenceError> {
    let value: f64 = confidence_marker()
        .captures_iter(text)
        .last()
        .and_then(|c| c[1].parse().ok())
        .ok_or(ConfidenceError::NoConfidence)?;
    if !(0.0..=100.0).contains(&value) {
        return Err(ConfidenceError::OutOfRange(value));
    }
    Ok(value)
}

/// The reply with its confidence line(s) removed.
pub fn strip_confidence(text: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let line = RE.get_or_init(|| {
        Regex::new(r"(?im)^.*confidence(?:\s+score)?\s*:\s*(?:\*\*)?\s*-?\d+(?:\.\d+)?\s*%.*$").unwrap()
    });
    line.replace_all(text, "").trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub round: usize,
    pub question: String,
    pub answer: String,
    pub confidence: f64,
    pub answer_length: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxRounds,
    LowConfidence,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementResult {
    /// Answer of the last accepted round; `None` when round 1 was dropped.
    pub final_answer: Option<String>,
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_rounds: usize,
    /// Answers below this confidence are dropped and end the loop.
    pub threshold: f64,
    /// Stop early when two accepted answers in a row are identical.
    pub stop_on_fixed_point: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { max_rounds: DEFAULT_MAX_ROUNDS, threshold: DEFAULT_THRESHOLD, stop_on_fixed_point: true }
    }
}

/// System context for a round: the base prompt plus the earlier rounds.
fn context(base: &str, earlier: &[IterationRecord]) -> String {
    let mut out = base.to_string();
    for r in earlier {
        out.push_str(&format!("\n\nQuestion: {}\nAnswer: {}", r.question, r.answer));
    }
    out
}

pub fn refine(
    gateway: &dyn ChatModel,
    reg: &PromptRegistry,
    question: &str,
    opts: RefineOptions,
) -> Result<RefinementResult, RefinementError> {
    if opts.max_rounds == 0 {
        return Err(RefinementError::ZeroRounds);
    }
    if !(0.0..=100.0).contains(&opts.threshold) {
        return Err(RefinementError::BadThreshold(opts.threshold));
    }
    let base = reg.get(ids::REFINE_SYSTEM)?.body().to_string();
    let betterment = reg.get(ids::REFINE_BETTERMENT)?.body().to_string();
    let mut records: Vec<IterationRecord> = Vec::new();

    for round in 1..=opts.max_rounds {
        let user = if round == 1 { question.to_string() } else { format!("{question}\n{betterment}") };
        let session = [ChatMessage::system(context(&base, &records)), ChatMessage::user(user)];
        let reply = match gateway.complete(&session) {
            Ok(r) => r,
            Err(source) => return Err(RefinementError::Gateway { round, source, partial: records }),
        };
        let confidence = parse_confidence(&reply).unwrap_or_else(|e| {
            log::warn!("round {round}: {e}; treating confidence as 0");
            0.0
        });
        let answer = strip_confidence(&reply);
        let accepted = confidence >= opts.threshold;
        let repeated = records.last().is_some_and(|r| r.answer == answer);
        records.push(IterationRecord {
            round,
            question: question.to_string(),
            answer_length: text_metrics::token_count(&answer),
            answer,
            confidence,
            accepted,
        });
        let stop = if !accepted {
            Some(StopReason::LowConfidence)
        } else if opts.stop_on_fixed_point && repeated {
            Some(StopReason::FixedPoint)
        } else if round == opts.max_rounds {
            Some(StopReason::MaxRounds)
        } else {
            None
        };
        if let Some(stop_reason) = stop {
            if !accepted {
                log::info!("round {round}: confidence {confidence} below {}, answer dropped", opts.threshold);
            }
            let final_answer = records.iter().rev().find(|r| r.accepted).map(|r| r.answer.clone());
            return Ok(RefinementResult { final_answer, records, stop_reason });
        }
    }
    unreachable!("the last round always stops")
}

/// Per-round comparison against the first round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub length: usize,
    pub coverage: f64,
    pub similarity: f64,
}

pub fn iteration_metrics(records: &[IterationRecord], embedder: Option<&dyn text_metrics::Embedder>) -> Vec<RoundMetrics> {
    let Some(first) = records.first() else { return Vec::new() };
    records
        .iter()
        .map(|r| RoundMetrics {
            round: r.round,
            length: r.answer_length,
            coverage: text_metrics::coverage(&first.answer, &r.answer).unwrap_or(0.0),
            similarity: text_metrics::similarity(&first.answer, &r.answer, embedder).unwrap_or(0.0),
        })
        .collect()
}

/// `round,confidence,length,accepted` rows.
pub fn records_csv(records: &[IterationRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "confidence", "length", "accepted"]).unwrap();
    for r in records {
        w.write_record([r.round.to_string(), r.confidence.to_string(), r.answer_length.to_string(), r.accepted.to_string()])
            .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
