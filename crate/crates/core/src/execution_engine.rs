//! Running a materialized prompt plan against a chat model.
//!
//! The five strategies differ only in how steps become user turns: the last
//! step alone, all steps in one prompt (optionally with a chain-of-thought
//! cue or a ReAct scaffold), or one turn per step in a growing dialog.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::OnceLock;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model_gateway::{ChatMessage, ChatModel, ChatRole, GatewayError, SessionStore, StoreEntry};
use crate::plan_generator::{PromptSequence, StepKind};
use crate::prompt_registry::{bindings, ids, instantiate_text, PromptError, PromptRegistry, RoleProfile};

/// Appended to the combined prompt by [`Strategy::AllQCOT`].
pub const COT_SUFFIX: &str = "\n\nthink step-by-step";

#[derive(Debug, Error)]
pub enum ExecutionError {
    #[error("step {step}: {source}")]
    Gateway {
        step: usize,
        #[source]
        source: GatewayError,
    },
    #[error("ReAct reply has no 'Final Answer:' marker")]
    MalformedFinalAnswer,
    #[error("empty reply for step {0}")]
    EmptyReply(usize),
    #[error("a ReAct scaffold needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("sequence still has unbound placeholders: {0:?}")]
    Unmaterialized(Vec<String>),
    #[error("the last step is not an export step")]
    NoExportStep,
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    LastQ,
    AllQ,
    AllQCOT,
    AllQReAct,
    GITQ,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::LastQ, Strategy::AllQ, Strategy::AllQCOT, Strategy::AllQReAct, Strategy::GITQ];

    pub fn tag(self) -> &'static str {
        match self {
            Strategy::LastQ => "lastq",
            Strategy::AllQ => "allq",
            Strategy::AllQCOT => "allqcot",
            Strategy::AllQReAct => "allqreact",
            Strategy::GITQ => "gitq",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy '{s}' (expected lastq, allq, allqcot, allqreact or gitq)"))
    }
}

/// Source of transcript timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Ticks one second per reading from a fixed start, for reproducible
/// transcripts.
pub struct LogicalClock {
    start: DateTime<Utc>,
    ticks: AtomicI64,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self { start, ticks: AtomicI64::new(0) }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        self.start + Duration::seconds(self.ticks.fetch_add(1, Ordering::SeqCst))
    }
}

fn stamp(clock: &dyn Clock) -> String {
    clock.now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub role: ChatRole,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_index: Option<usize>,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub strategy: Strategy,
    pub started_at: String,
    pub finished_at: String,
    pub records: Vec<TranscriptRecord>,
}

impl Transcript {
    pub fn messages(&self) -> Vec<ChatMessage> {
        self.records
            .iter()
            .map(|r| ChatMessage { role: r.role, content: r.content.clone() })
            .collect()
    }

    pub fn count(&self, role: ChatRole) -> usize {
        self.records.iter().filter(|r| r.role == role).count()
    }

    /// Assistant replies with the step they answer, when known.
    pub fn answer_spans(&self) -> Vec<(Option<usize>, &str)> {
        self.records
            .iter()
            .filter(|r| r.role == ChatRole::Assistant)
            .map(|r| (r.step_index, r.content.as_str()))
            .collect()
    }

    /// One record per line.
    pub fn to_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    /// Every call in the transcript as a recorded session, so the run can be
    /// replayed.
    pub fn to_store(&self) -> SessionStore {
        let messages = self.messages();
        let entries = messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.role == ChatRole::Assistant)
            .map(|(i, m)| StoreEntry::new(&messages[..i], m.content.clone()))
            .collect();
        SessionStore { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartLabel {
    AssetDescription,
    KpiExplanation,
    Measurement,
}

impl PartLabel {
    pub const ORDER: [PartLabel; 3] = [PartLabel::AssetDescription, PartLabel::KpiExplanation, PartLabel::Measurement];

    pub fn as_str(self) -> &'static str {
        match self {
            PartLabel::AssetDescription => "asset-description",
            PartLabel::KpiExplanation => "kpi-explanation",
            PartLabel::Measurement => "measurement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocPart {
    pub label: PartLabel,
    /// The heading line exactly as written, newline included; empty when the
    /// text had no headings.
    pub heading: String,
    pub body: String,
}

impl DocPart {
    pub fn text(&self) -> String {
        format!("{}{}", self.heading, self.body)
    }
}

/// The three-part guideline produced by the export step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeDocument {
    /// Text before the first part heading.
    #[serde(default)]
    pub preamble: String,
    pub parts: Vec<DocPart>,
    /// Digest of the transcript the document came from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_transcript: Option<String>,
}

impl KnowledgeDocument {
    pub fn from_markdown(markdown: &str) -> Self {
        let (preamble, parts) = split_parts(markdown);
        Self { preamble, parts, source_transcript: None }
    }

    pub fn part(&self, label: PartLabel) -> Option<&DocPart> {
        self.parts.iter().find(|p| p.label == label)
    }

    /// The original markdown, byte for byte.
    pub fn to_markdown(&self) -> String {
        let mut out = self.preamble.clone();
        for p in &self.parts {
            out.push_str(&p.heading);
            out.push_str(&p.body);
        }
        out
    }
}

fn part_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?mi)^[ \t]*(?:#{1,6}[ \t]*)?(?:\*\*)?Part[ \t]+[1-3]\b.*(?:\n|$)").unwrap())
}

fn top_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^#{1,2}[ \t]+\S.*(?:\n|$)").unwrap())
}

/// Splits the export reply at "Part N" headings, or failing that at the first
/// three level-1/2 headings. Returns the preamble and the labelled parts;
/// concatenating them gives back the input.
pub fn split_parts(markdown: &str) -> (String, Vec<DocPart>) {
    let mut heads: Vec<(usize, usize)> = part_heading().find_iter(markdown).map(|m| (m.start(), m.end())).collect();
    if heads.is_empty() {
        heads = top_heading().find_iter(markdown).map(|m| (m.start(), m.end())).collect();
    }
    heads.truncate(3);
    if heads.is_empty() {
        log::warn!("knowledge document has no part headings; keeping it as a single part");
        let part = DocPart { label: PartLabel::AssetDescription, heading: String::new(), body: markdown.to_string() };
        return (String::new(), vec![part]);
    }
    let preamble = markdown[..heads[0].0].to_string();
    let parts = heads
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| {
            let next = heads.get(k + 1).map_or(markdown.len(), |h| h.0);
            DocPart {
                label: PartLabel::ORDER[k],
                heading: markdown[start..end].to_string(),
                body: markdown[end..next].to_string(),
            }
        })
        .collect();
    (preamble, parts)
}

/// "Step k: body" blocks joined by blank lines.
pub fn combined_prompt(seq: &PromptSequence, order: &[usize]) -> String {
    order
        .iter()
        .filter_map(|&i| seq.step(i))
        .map(|s| format!("Step {}: {}", s.index, s.body))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// The single-shot ReAct prompt: every step but the last as a question, the
/// last as the final request.
pub fn wrap_react(seq: &PromptSequence, reg: &PromptRegistry) -> Result<String, ExecutionError> {
    let n = seq.len();
    if n < 2 {
        return Err(ExecutionError::TooFewSteps(n));
    }
    let preamble = match &seq.asset {
        Some(a) => format!(
            "Now let's focus on asset class {c}. The asset description is {d}. Now we have prepared the following questions for the asset {c}.",
            c = a.asset_class,
            d = a.asset_description
        ),
        None => "Now we have prepared the following questions.".to_string(),
    };
    let order: Vec<usize> = (1..n).collect();
    let questions = order
        .iter()
        .filter_map(|&i| seq.step(i))
        .map(|s| format!("Step {}: {}", s.index, s.body))
        .collect::<Vec<_>>()
        .join("\n");
    let last = &seq.steps[n - 1].body;
    Ok(reg.render(
        ids::REACT_USER,
        &bindings([("preamble", preamble), ("questions", questions), ("final_request", last.clone())]),
    )?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactTriple {
    pub question: String,
    pub thought: String,
    pub answer: String,
}

fn react_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*(?:\*\*)?(Question|Thought|Answer)(?:\*\*)?[ \t]*:(?:\*\*)?").unwrap())
}

/// Reads a ReAct reply into its question/thought/answer triples and the text
/// after the last "Final Answer:".
pub fn parse_react_reply(text: &str) -> Result<(Vec<ReactTriple>, String), ExecutionError> {
    let cut = text.rfind("Final Answer:").ok_or(ExecutionError::MalformedFinalAnswer)?;
    let final_answer = text[cut + "Final Answer:".len()..].trim().to_string();
    let head = &text[..cut];
    let marks: Vec<(usize, usize, String)> = react_marker()
        .captures_iter(head)
        .map(|c| {
            let m = c.get(0).unwrap();
            (m.start(), m.end(), c[1].to_string())
        })
        .collect();
    let mut triples = Vec::new();
    let mut current: Option<ReactTriple> = None;
    for (k, (_, end, kind)) in marks.iter().enumerate() {
        let stop = marks.get(k + 1).map_or(head.len(), |m| m.0);
        let content = head[*end..stop].trim().to_string();
        match kind.as_str() {
            "Question" => {
                current = Some(ReactTriple { question: content, ..Default::default() });
            }
            "Thought" => {
                if let Some(t) = current.as_mut() {
                    t.thought = content;
                }
            }
            _ => {
                if let Some(mut t) = current.take() {
                    t.answer = content;
                    triples.push(t);
                }
            }
        }
    }
    Ok((triples, final_answer))
}

struct Session<'a> {
    gateway: &'a dyn ChatModel,
    clock: &'a dyn Clock,
    records: Vec<TranscriptRecord>,
}

impl Session<'_> {
    fn push(&mut self, role: ChatRole, content: String, step_index: Option<usize>) {
        let timestamp = stamp(self.clock);
        self.records.push(TranscriptRecord { role, content, step_index, timestamp });
    }

    fn ask(&mut self, prompt: String, step_index: Option<usize>, error_step: usize) -> Result<String, ExecutionError> {
        self.push(ChatRole::User, prompt, step_index);
        let messages: Vec<ChatMessage> = self
            .records
            .iter()
            .map(|r| ChatMessage { role: r.role, content: r.content.clone() })
            .collect();
        let reply = self
            .gateway
            .complete(&messages)
            .map_err(|source| ExecutionError::Gateway { step: error_step, source })?;
        self.push(ChatRole::Assistant, reply.clone(), step_index);
        Ok(reply)
    }
}

/// Runs `seq` under `strategy` and splits the export answer into a
/// knowledge document.
pub fn execute(
    seq: &PromptSequence,
    strategy: Strategy,
    role: &RoleProfile,
    reg: &PromptRegistry,
    gateway: &dyn ChatModel,
    clock: &dyn Clock,
) -> Result<(KnowledgeDocument, Transcript), ExecutionError> {
    let unbound = seq.placeholders();
    if !unbound.is_empty() {
        return Err(ExecutionError::Unmaterialized(unbound.into_iter().collect()));
    }
    let n = seq.len();
    if seq.steps.last().map(|s| s.kind) != Some(StepKind::Export) {
        return Err(ExecutionError::NoExportStep);
    }

    let started_at = stamp(clock);
    let mut session = Session { gateway, clock, records: Vec::new() };
    let system = system_prompt(seq, role, reg)?;
    if !system.is_empty() {
        session.push(ChatRole::System, system, None);
    }

    let schedule = seq.execution_order.schedule();
    let final_text = match strategy {
        Strategy::LastQ => session.ask(seq.steps[n - 1].body.clone(), Some(n), n)?,
        Strategy::AllQ => session.ask(combined_prompt(seq, &schedule), None, n)?,
        Strategy::AllQCOT => session.ask(combined_prompt(seq, &schedule) + COT_SUFFIX, None, n)?,
        Strategy::AllQReAct => {
            let reply = session.ask(wrap_react(seq, reg)?, None, n)?;
            parse_react_reply(&reply)?.1
        }
        Strategy::GITQ => {
            let mut failure = None;
            let mut last = String::new();
            seq.execution_order.evaluate(&mut |i| {
                if failure.is_some() {
                    return false;
                }
                match session.ask(seq.steps[i - 1].body.clone(), Some(i), i) {
                    Ok(reply) => {
                        let ok = !reply.trim().is_empty();
                        last = reply;
                        ok
                    }
                    Err(e) => {
                        failure = Some(e);
                        false
                    }
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            last
        }
    };
    if final_text.trim().is_empty() {
        return Err(ExecutionError::EmptyReply(n));
    }

    let transcript = Transcript { strategy, started_at, finished_at: stamp(clock), records: session.records };
    let mut doc = KnowledgeDocument::from_markdown(final_text.trim());
    doc.source_transcript = Some(transcript.digest());
    Ok((doc, transcript))
}

fn system_prompt(seq: &PromptSequence, role: &RoleProfile, reg: &PromptRegistry) -> Result<String, ExecutionError> {
    let tpl = reg.system_prompt(role)?;
    if tpl.required_placeholders().is_empty() {
        return Ok(tpl.body().to_string());
    }
    let asset = seq.asset.as_ref();
    let b = bindings([
        ("asset_class", asset.map_or("", |a| a.asset_class.as_str())),
        ("asset_description", asset.map_or("", |a| a.asset_description.as_str())),
    ]);
    Ok(instantiate_text(tpl.body(), &b)?.text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_tags_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.tag().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("AllQReAct".parse::<Strategy>().unwrap(), Strategy::AllQReAct);
        assert!("react".parse::<Strategy>().is_err());
    }

    #[test]
    fn split_on_part_headings() {
        let text = "# Furnace guide\n\n## Part 1: Intro\nabout\n## Part 2: KPIs\nkpis\n## Part 3: Sensors\nsensors\n";
        let (pre, parts) = split_parts(text);
        assert_eq!(pre, "# Furnace guide\n\n");
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[2].label, PartLabel::Measurement);
        assert_eq!(parts[1].body, "kpis\n");
        let doc = KnowledgeDocument::from_markdown(text);
        assert_eq!(doc.to_markdown(), text);
    }

    #[test]
    fn split_on_plain_headings() {
        let text = "# Intro\na\n# Factors\nb";
        let (_, parts) = split_parts(text);
        assert_eq!(parts.len(), 2);
        assert!(parts.iter().all(|p| p.label != PartLabel::Measurement));
    }

    #[test]
    fn no_headings_gives_one_part() {
        let (pre, parts) = split_parts("just a paragraph");
        assert!(pre.is_empty());
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].label, PartLabel::AssetDescription);
    }

    #[test]
    fn react_reply_parsing() {
        let reply = "Question: q1\nThought: t1\nAnswer: a1\nQuestion: q2\nThought: t2\nAnswer: a2\nThought: Now I know\nFinal Answer: done";
        let (triples, fin) = parse_react_reply(reply).unwrap();
        assert_eq!(triples.len(), 2);
        assert_eq!(triples[1], ReactTriple { question: "q2".into(), thought: "t2".into(), answer: "a2".into() });
        assert_eq!(fin, "done");
        assert_eq!(parse_react_reply("Final Answer: X").unwrap(), (vec![], "X".to_string()));
        assert!(matches!(parse_react_reply("nothing"), Err(ExecutionError::MalformedFinalAnswer)));
    }

    #[test]
    fn logical_clock_ticks() {
        let c = LogicalClock::default();
        assert_eq!(stamp(&c), "2024-01-01T00:00:00Z");
        assert_eq!(stamp(&c), "2024-01-01T00:00:01Z");
    }
}
