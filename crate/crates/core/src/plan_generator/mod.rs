//! Turning a KPI taxonomy into an ordered prompt plan.
//!
//! Two routes produce a [`PromptSequence`]: asking a chat model with a
//! one-shot demonstration ([`build_planning_context`] then [`parse_plan`]),
//! or walking the taxonomy directly ([`generate_sequence_deterministic`]).
//! Either way, code steps are then settled against the taxonomy by
//! [`resolve_code_steps`] and asset placeholders are filled by
//! [`materialize_sequence`].

mod order;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use order::{ExecutionOrder, OrderSyntaxError};

use crate::model_gateway::ChatMessage;
use crate::prompt_registry::{bindings, ids, instantiate_text, placeholders_in, PromptError, PromptRegistry};
use crate::taxonomy::{NodeId, NodeKind, Taxonomy, TaxonomyError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan text contains no 'Step N:' markers")]
    NoSteps,
    #[error("plan text has no 'Execution Order:' line")]
    NoExecutionOrder,
    #[error("step indices are not 1..n without gaps or repeats: {0:?}")]
    NonContiguousIndices(Vec<usize>),
    #[error("execution order refers to unknown step {0}")]
    UnknownStepInOrder(usize),
    #[error(transparent)]
    OrderSyntax(#[from] OrderSyntaxError),
    #[error("goal target '{0}' is not a node of any provided taxonomy")]
    GoalUnbound(String),
    #[error("planning demonstration is empty")]
    EmptyDemonstration,
    #[error("code step {0} names no taxonomy node")]
    UnresolvableCodeStep(usize),
    #[error("no taxonomies supplied")]
    NoTaxonomies,
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("plan file: {0}")]
    Format(String),
}

/// What the plan is trying to achieve, e.g. "Analyze the asset health using
/// asset profile information".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub kpi: String,
    pub target_node: NodeId,
    pub method_phrase: String,
    #[serde(default = "default_action")]
    pub action: String,
}

fn default_action() -> String {
    "Analyze".to_string()
}

impl Goal {
    pub fn new(kpi: impl Into<String>, target_node: &str, method_phrase: impl Into<String>) -> Self {
        Self {
            kpi: kpi.into(),
            target_node: NodeId::new(target_node),
            method_phrase: method_phrase.into(),
            action: default_action(),
        }
    }

    pub fn with_action(mut self, action: impl Into<String>) -> Self {
        self.action = action.into();
        self
    }

    pub fn statement(&self) -> String {
        format!("{} the {} {}", self.action, self.kpi, self.method_phrase)
    }

    /// Index of the first taxonomy that contains the target node.
    pub fn bound_in(&self, taxonomies: &[&Taxonomy]) -> Result<usize, PlanError> {
        taxonomies
            .iter()
            .position(|t| t.contains(self.target_node.as_str()))
            .ok_or_else(|| PlanError::GoalUnbound(self.target_node.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Question,
    Code,
    Export,
}

impl StepKind {
    /// Classifies a step body by what it asks for.
    pub fn classify(body: &str) -> Self {
        let lower = body.to_lowercase();
        const CODE: [&str; 3] = ["generate a python code", "generate a program", "generate python code"];
        if CODE.iter().any(|p| lower.contains(p)) {
            StepKind::Code
        } else if lower.contains("export a markdown output") {
            StepKind::Export
        } else {
            StepKind::Question
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStep {
    pub index: usize,
    pub kind: StepKind,
    pub body: String,
}

impl PromptStep {
    pub fn new(index: usize, body: impl Into<String>) -> Self {
        let body = body.into();
        Self { index, kind: StepKind::classify(&body), body }
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        placeholders_in(&self.body)
    }
}

/// The asset a sequence has been specialised for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetBinding {
    pub asset_class: String,
    pub asset_description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSequence {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Goal>,
    pub steps: Vec<PromptStep>,
    pub execution_order: ExecutionOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<AssetBinding>,
}

impl PromptSequence {
    /// Builds a sequence, checking indices and order references.
    pub fn new(goal: Option<Goal>, steps: Vec<PromptStep>, execution_order: ExecutionOrder) -> Result<Self, PlanError> {
        let seq = Self { goal, steps, execution_order, asset: None };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.steps.is_empty() {
            return Err(PlanError::NoSteps);
        }
        let indices: Vec<usize> = self.steps.iter().map(|s| s.index).collect();
        if indices.iter().enumerate().any(|(k, &i)| i != k + 1) {
            return Err(PlanError::NonContiguousIndices(indices));
        }
        if let Some(&bad) = self.execution_order.indices().iter().find(|&&i| i == 0 || i > self.steps.len()) {
            return Err(PlanError::UnknownStepInOrder(bad));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, index: usize) -> Option<&PromptStep> {
        index.checked_sub(1).and_then(|i| self.steps.get(i))
    }

    pub fn placeholders(&self) -> BTreeSet<String> {
        self.steps.iter().flat_map(PromptStep::placeholders).collect()
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("sequence serializes")
    }

    pub fn from_yaml(text: &str) -> Result<Self, PlanError> {
        let seq: Self = serde_yaml::from_str(text).map_err(|e| PlanError::Format(e.to_string()))?;
        seq.validate()?;
        Ok(seq)
    }

    /// Drops one step, renumbering the rest and the order expression.
    fn remove_step(&mut self, index: usize) {
        self.steps.remove(index - 1);
        for (k, s) in self.steps.iter_mut().enumerate() {
            s.index = k + 1;
        }
        self.execution_order = self
            .execution_order
            .without_step(index)
            .unwrap_or_else(|| ExecutionOrder::all_and(self.steps.len().max(1)));
    }
}

fn step_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*(?:\*\*)?Step[ \t]+(\d+)[ \t]*(?:\*\*)?[ \t]*:(?:\*\*)?").unwrap())
}

fn order_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*(?:\*\*)?Execution Order[ \t]*(?:\*\*)?[ \t]*:(?:\*\*)?(.*)$").unwrap())
}

fn think_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*#[ \t]*Think[ \t]*:").unwrap())
}

/// Cuts `text` at the earliest of the next step marker, think block or
/// execution order line.
fn body_end(text: &str) -> usize {
    [step_marker(), think_marker(), order_marker()]
        .iter()
        .filter_map(|re| re.find(text).map(|m| m.start()))
        .min()
        .unwrap_or(text.len())
}

fn clean_body(raw: &str) -> String {
    raw.lines().map(str::trim).collect::<Vec<_>>().join("\n").trim().to_string()
}

/// The reasoning paragraphs that precede steps. Kept for audit only.
pub fn think_blocks(text: &str) -> Vec<String> {
    think_marker()
        .find_iter(text)
        .map(|m| {
            let rest = &text[m.end()..];
            clean_body(&rest[..body_end(rest)])
        })
        .collect()
}

/// Reads a model-written plan. Think blocks are skipped.
pub fn parse_plan(model_output: &str) -> Result<PromptSequence, PlanError> {
    let mut steps: Vec<PromptStep> = step_marker()
        .captures_iter(model_output)
        .map(|c| {
            let whole = c.get(0).unwrap();
            let index: usize = c[1].parse().unwrap_or(0);
            let rest = &model_output[whole.end()..];
            PromptStep::new(index, clean_body(&rest[..body_end(rest)]))
        })
        .collect();
    if steps.is_empty() {
        return Err(PlanError::NoSteps);
    }
    let order_text = order_marker()
        .captures(model_output)
        .map(|c| c[1].to_string())
        .ok_or(PlanError::NoExecutionOrder)?;
    steps.sort_by_key(|s| s.index);
    let order: ExecutionOrder = order_text.parse()?;
    PromptSequence::new(None, steps, order)
}

/// Pretty-prints a sequence in the same layout [`parse_plan`] reads.
pub fn format_plan(seq: &PromptSequence) -> String {
    let mut out = String::new();
    if let Some(goal) = &seq.goal {
        let _ = writeln!(out, "Goal: {}", goal.statement());
    }
    for s in &seq.steps {
        let _ = writeln!(out, "Step {}: {}", s.index, s.body);
    }
    let _ = write!(out, "Execution Order: {} Goal completed!", seq.execution_order);
    out
}

/// Node named by a code step: `node='x'`, or "takes the x as an input node".
fn code_step_node(body: &str) -> Option<String> {
    static QUOTED: OnceLock<Regex> = OnceLock::new();
    static PHRASE: OnceLock<Regex> = OnceLock::new();
    let quoted = QUOTED.get_or_init(|| Regex::new(r#"node\s*=\s*['"]([^'"]+)['"]"#).unwrap());
    let phrase = PHRASE.get_or_init(|| Regex::new(r"(?i)takes the (.+?) as an input node").unwrap());
    quoted
        .captures(body)
        .or_else(|| phrase.captures(body))
        .map(|c| c[1].trim().to_string())
}

fn code_step_keyword(body: &str) -> String {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)has a word (\w+)").unwrap());
    re.captures(body).map_or_else(|| "sensor".to_string(), |c| c[1].to_lowercase())
}

/// Matches a loose node mention ("component") to a node id ("component
/// quality"): exact first, then a unique node whose words start with it.
fn resolve_node(tax: &Taxonomy, mention: &str) -> Option<NodeId> {
    let id = NodeId::new(mention);
    if tax.contains(id.as_str()) {
        return Some(id);
    }
    let words: Vec<&str> = id.as_str().split(' ').collect();
    let candidates: Vec<&NodeId> = tax
        .nodes()
        .iter()
        .map(|n| &n.id)
        .filter(|n| {
            let node_words: Vec<&str> = n.as_str().split(' ').collect();
            node_words.starts_with(&words)
        })
        .collect();
    match candidates.as_slice() {
        [one] => Some((*one).clone()),
        _ => {
            let contains: Vec<&NodeId> = tax
                .nodes()
                .iter()
                .map(|n| &n.id)
                .filter(|n| n.as_str().split(' ').collect::<Vec<_>>().windows(words.len()).any(|w| w == words))
                .collect();
            match contains.as_slice() {
                [one] => Some((*one).clone()),
                _ => None,
            }
        }
    }
}

/// Settles every code step against the taxonomy instead of running model
/// code: when the named node has a descendant mentioning the keyword the step
/// becomes a sensor question, otherwise it is dropped.
pub fn resolve_code_steps(seq: &PromptSequence, tax: &Taxonomy, reg: &PromptRegistry) -> Result<PromptSequence, PlanError> {
    let mut out = seq.clone();
    let mut k = 0;
    while k < out.steps.len() {
        let step = &out.steps[k];
        if step.kind != StepKind::Code {
            k += 1;
            continue;
        }
        let node = code_step_node(&step.body)
            .and_then(|m| resolve_node(tax, &m))
            .ok_or(PlanError::UnresolvableCodeStep(step.index))?;
        let keyword = code_step_keyword(&step.body);
        if tax.descendant_mentions(node.as_str(), &keyword)? {
            let sources: Vec<String> = tax
                .descendants(node.as_str())?
                .into_iter()
                .filter(|n| n.kind == NodeKind::Measurement)
                .map(|n| n.label.clone())
                .collect();
            let body = reg.render(
                ids::PLAN_SENSORS,
                &bindings([("target", node.as_str().to_string()), ("factor_list", enumerate_list(&sources))]),
            )?;
            log::debug!("code step {} on '{node}' becomes a sensor question", step.index);
            out.steps[k] = PromptStep { index: step.index, kind: StepKind::Question, body };
            k += 1;
        } else {
            log::debug!("code step {} on '{node}' dropped: no '{keyword}' below it", step.index);
            out.remove_step(step.index);
        }
    }
    Ok(out)
}

/// "1. a", "1. a and 2. b", "1. a, 2. b, and 3. c".
pub fn enumerate_list(items: &[String]) -> String {
    let numbered: Vec<String> = items.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect();
    match numbered.len() {
        0 => String::new(),
        1 => numbered[0].clone(),
        2 => format!("{} and {}", numbered[0], numbered[1]),
        n => format!("{}, and {}", numbered[..n - 1].join(", "), numbered[n - 1]),
    }
}

/// "a", "a and b", "a, b and c".
pub fn category_list(items: &[String]) -> String {
    match items.len() {
        0 => String::new(),
        1 => items[0].clone(),
        n => format!("{} and {}", items[..n - 1].join(", "), items[n - 1]),
    }
}

/// Builds a plan by walking the taxonomy below the goal's target node: an
/// overview step, one step per child, a collection step, asset-specific
/// steps, a sensor code step when measurements exist below, and the export.
pub fn generate_sequence_deterministic(tax: &Taxonomy, goal: &Goal, reg: &PromptRegistry) -> Result<PromptSequence, PlanError> {
    goal.bound_in(&[tax])?;
    let target = goal.target_node.as_str();
    let kpi = goal.kpi.to_lowercase();
    let children: Vec<String> = tax.children(target)?.iter().map(|n| n.label.clone()).collect();
    let base = |extra: &[(&str, String)]| {
        let mut b = bindings([
            ("target", target.to_string()),
            ("kpi", kpi.clone()),
            ("asset_class", "${asset_class}".to_string()),
            ("asset_description", "${asset_description}".to_string()),
        ]);
        for (k, v) in extra {
            b.insert(k.to_string(), v.clone());
        }
        b
    };
    let render = |id: &str, extra: &[(&str, String)]| -> Result<String, PlanError> {
        let tpl = reg.get(id)?;
        Ok(instantiate_text(tpl.body(), &base(extra))?.text)
    };

    let mut bodies = Vec::new();
    let overview = if children.is_empty() { vec![target.to_string()] } else { children.clone() };
    bodies.push(render(ids::PLAN_ENUMERATE, &[("factor_list", enumerate_list(&overview))])?);
    for child in &children {
        let grandchildren: Vec<String> = tax.children(child)?.iter().map(|n| n.label.clone()).collect();
        let factor_list = if grandchildren.is_empty() {
            format!("{child} of {target}")
        } else {
            enumerate_list(&grandchildren)
        };
        bodies.push(render(ids::PLAN_CHILD, &[("child", child.clone()), ("factor_list", factor_list)])?);
    }
    if !children.is_empty() {
        bodies.push(render(ids::PLAN_COLLECT, &[])?);
    }
    bodies.push(render(ids::PLAN_DETERIORATION, &[])?);
    bodies.push(render(ids::PLAN_SPECIALIZE, &[])?);
    bodies.push(render(ids::PLAN_SPECIFIC, &[])?);
    if tax.has_measurement_descendant(target)? {
        bodies.push(render(ids::PLAN_CODE, &[])?);
    }
    let categories = if children.is_empty() { vec![target.to_string()] } else { children };
    bodies.push(render(ids::PLAN_EXPORT, &[("category_list", category_list(&categories))])?);

    let n = bodies.len();
    let steps = bodies.into_iter().enumerate().map(|(k, b)| PromptStep::new(k + 1, b)).collect();
    PromptSequence::new(Some(goal.clone()), steps, ExecutionOrder::all_and(n))
}

/// System and user messages asking a model to plan for `goal`, using the
/// demonstration as a one-shot example.
pub fn build_planning_context(
    taxonomies: &[&Taxonomy],
    demonstration: &str,
    goal: &Goal,
    reg: &PromptRegistry,
) -> Result<Vec<ChatMessage>, PlanError> {
    if demonstration.trim().is_empty() {
        return Err(PlanError::EmptyDemonstration);
    }
    let first = taxonomies.first().ok_or(PlanError::NoTaxonomies)?;
    goal.bound_in(taxonomies)?;
    let rendered: Vec<String> = taxonomies
        .iter()
        .map(|t| format!("Here is the {} taxonomy.\n{}", t.name(), t.description()))
        .collect();
    let system = reg.render(
        ids::PLANNER_SYSTEM,
        &bindings([
            ("taxonomies", rendered.join("\n")),
            ("demonstration", demonstration.trim().to_string()),
            ("reference_taxonomy", first.name().to_string()),
        ]),
    )?;
    Ok(vec![ChatMessage::system(system), ChatMessage::user(format!("Goal: {}", goal.statement()))])
}

/// Substitutes the asset class and description into every step.
pub fn materialize_sequence(seq: &PromptSequence, asset_class: &str, asset_description: &str) -> Result<PromptSequence, PlanError> {
    let b = bindings([("asset_class", asset_class), ("asset_description", asset_description)]);
    let mut out = seq.clone();
    for step in &mut out.steps {
        step.body = instantiate_text(&step.body, &b)?.text;
    }
    out.asset = Some(AssetBinding {
        asset_class: asset_class.to_string(),
        asset_description: asset_description.to_string(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn response_one_parses_to_nine_and_steps() {
        let seq = parse_plan(fixtures::PLAN_RESPONSE_ASSET_PROFILE).unwrap();
        assert_eq!(seq.len(), 9);
        assert_eq!(seq.execution_order, ExecutionOrder::all_and(9));
        assert_eq!(seq.steps[8].kind, StepKind::Export);
        assert!(seq.steps[..8].iter().all(|s| s.kind == StepKind::Question));
    }

    #[test]
    fn demonstration_has_code_and_export() {
        let seq = parse_plan(fixtures::PLAN_DEMONSTRATION).unwrap();
        assert_eq!(seq.len(), 11);
        assert_eq!(seq.steps[9].kind, StepKind::Code);
        assert_eq!(seq.steps[10].kind, StepKind::Export);
        assert!(!seq.steps.iter().any(|s| s.body.contains("# Think")));
        assert_eq!(think_blocks(fixtures::PLAN_DEMONSTRATION).len(), 6);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse_plan("no plan here"), Err(PlanError::NoSteps)));
        assert!(matches!(parse_plan("Step 1: a"), Err(PlanError::NoExecutionOrder)));
        assert!(matches!(
            parse_plan("Step 1: a\nStep 1: b\nExecution Order: (Step 1)"),
            Err(PlanError::NonContiguousIndices(_))
        ));
        assert!(matches!(
            parse_plan("Step 1: a\nStep 3: b\nExecution Order: (Step 1 AND Step 3)"),
            Err(PlanError::NonContiguousIndices(_))
        ));
        assert!(matches!(
            parse_plan("Step 1: a\nStep 2: b\nExecution Order: (Step 1 AND Step 7)"),
            Err(PlanError::UnknownStepInOrder(7))
        ));
    }

    #[test]
    fn bold_markers_are_accepted() {
        let seq = parse_plan("**Step 1:** a\n**Step 2:** b\n**Execution Order:** (Step 1 OR Step 2)").unwrap();
        assert_eq!(seq.steps[1].body, "b");
        assert!(!seq.execution_order.is_all_and());
    }

    #[test]
    fn format_round_trips_fixtures() {
        for text in [fixtures::PLAN_DEMONSTRATION, fixtures::PLAN_RESPONSE_ASSET_PROFILE, fixtures::PLAN_RESPONSE_ENVIRONMENTAL] {
            let seq = parse_plan(text).unwrap();
            let again = parse_plan(&format_plan(&seq)).unwrap();
            assert_eq!(again.steps, seq.steps);
            assert_eq!(again.execution_order, seq.execution_order);
        }
    }

    #[test]
    fn node_mentions_resolve() {
        let tax = fixtures::asset_health_taxonomy();
        assert_eq!(resolve_node(&tax, "component").unwrap().as_str(), "component quality");
        assert_eq!(resolve_node(&tax, "Asset Profile").unwrap().as_str(), "asset profile");
        assert!(resolve_node(&tax, "issue").is_none());
        assert!(resolve_node(&tax, "gearbox").is_none());
    }

    #[test]
    fn yaml_round_trip() {
        let mut seq = parse_plan(fixtures::PLAN_RESPONSE_ENVIRONMENTAL).unwrap();
        seq.goal = Some(Goal::new("asset sustainability", "environmental impact", "from it Environmental Impact"));
        let back = PromptSequence::from_yaml(&seq.to_yaml()).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn list_helpers() {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert_eq!(enumerate_list(&v(&["a"])), "1. a");
        assert_eq!(enumerate_list(&v(&["a", "b"])), "1. a and 2. b");
        assert_eq!(enumerate_list(&v(&["a", "b", "c"])), "1. a, 2. b, and 3. c");
        assert_eq!(category_list(&v(&["a", "b", "c"])), "a, b and c");
    }
}
