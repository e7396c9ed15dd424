//! End-to-end runs: the operations behind each CLI subcommand.
//!
//! Every failure carries the stage it happened in and maps onto a stable
//! process exit code (2 input or validation, 3 gateway, 4 internal).

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::Serialize;

use crate::execution_engine::{self, ExecutionError, KnowledgeDocument, LogicalClock, Strategy};
use crate::fixtures;
use crate::health_scoring::{scores_csv, AggregationConfig, HealthEstimator, ScoringError};
use crate::model_gateway::{ChatMessage, ChatModel, ChatRole, GatewayConfig, GatewayError, Recorder, Replay, ScriptedModel};
use crate::plan_generator::{
    build_planning_context, format_plan, generate_sequence_deterministic, materialize_sequence, parse_plan,
    resolve_code_steps, Goal, PlanError, PromptSequence,
};
use crate::prompt_registry::{bindings, ids, PromptError, PromptRegistry, RoleName, RoleProfile};
use crate::recipe_store::{
    bundle, generate_synthetic, synthetic_epoch, HealthIndicatorConfig, ModelDescriptor, Recipe, RecipeError,
    RecipeIndex, RunMetadata, SampleDataset, WrapperManifest,
};
use crate::reference_pipeline::{
    CitedDocument, HttpNliClient, HttpSearchClient, NliClient, ReferenceError, ReferencePipeline, ScriptedNli,
    ScriptedSearch, SearchClient,
};
use crate::refinement::{self, records_csv, RefineOptions, RefinementError};
use crate::taxonomy::{Taxonomy, TaxonomyError};
use crate::text_metrics::{self, MetricsError};

/// Assets in the generated sample dataset unless overridden.
pub const DEFAULT_ASSETS: usize = 5;
pub const RECIPE_DIR: &str = "recipe";
pub const LOG_DIR: &str = "logs";
pub const PLAN_FILE: &str = "plan.yaml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Plan,
    Describe,
    Materialize,
    Execute,
    References,
    Configs,
    Dataset,
    Bundle,
    Score,
    Metrics,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Plan => "plan",
            Stage::Describe => "describe",
            Stage::Materialize => "materialize",
            Stage::Execute => "execute",
            Stage::References => "references",
            Stage::Configs => "configs",
            Stage::Dataset => "dataset",
            Stage::Bundle => "bundle",
            Stage::Score => "score",
            Stage::Metrics => "metrics",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Gateway,
    Internal,
}

#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub class: ErrorClass,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, class: ErrorClass, message: impl Into<String>) -> Self {
        Self { stage, class, message: message.into() }
    }

    pub fn input(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorClass::Input, message.to_string())
    }

    pub fn gateway(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorClass::Gateway, message.to_string())
    }

    pub fn internal(stage: Stage, message: impl fmt::Display) -> Self {
        Self::new(stage, ErrorClass::Internal, message.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Input => 2,
            ErrorClass::Gateway => 3,
            ErrorClass::Internal => 4,
        }
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

type Result<T> = std::result::Result<T, PipelineError>;

trait Tagged<T> {
    fn at(self, stage: Stage) -> Result<T>;
}

macro_rules! tagged {
    ($err:ty, |$e:ident| $class:expr) => {
        impl<T> Tagged<T> for std::result::Result<T, $err> {
            fn at(self, stage: Stage) -> Result<T> {
                self.map_err(|$e| {
                    let class = $class;
                    PipelineError::new(stage, class, $e.to_string())
                })
            }
        }
    };
}

tagged!(GatewayError, |e| ErrorClass::Gateway);
tagged!(TaxonomyError, |e| ErrorClass::Input);
tagged!(PlanError, |e| ErrorClass::Input);
tagged!(PromptError, |e| ErrorClass::Input);
tagged!(MetricsError, |e| ErrorClass::Input);
tagged!(ScoringError, |e| ErrorClass::Input);
tagged!(ExecutionError, |e| match e {
    ExecutionError::Gateway { .. } | ExecutionError::MalformedFinalAnswer | ExecutionError::EmptyReply(_) =>
        ErrorClass::Gateway,
    _ => ErrorClass::Input,
});
tagged!(RefinementError, |e| match e {
    RefinementError::Gateway { .. } => ErrorClass::Gateway,
    _ => ErrorClass::Input,
});
tagged!(ReferenceError, |e| match e {
    ReferenceError::Gateway { .. } | ReferenceError::Search(_) => ErrorClass::Gateway,
    ReferenceError::Pool(_) => ErrorClass::Internal,
    _ => ErrorClass::Input,
});
tagged!(RecipeError, |e| match e {
    RecipeError::Io { .. } => ErrorClass::Internal,
    _ => ErrorClass::Input,
});

/// Where model replies come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GatewaySource {
    /// YAML `GatewayConfig` for an OpenAI-compatible endpoint.
    Live(PathBuf),
    /// YAML `replies: [...]`, served in call order.
    Script(PathBuf),
    /// JSONL session store captured with `record`.
    Replay(PathBuf),
}

impl GatewaySource {
    pub fn is_live(&self) -> bool {
        matches!(self, GatewaySource::Live(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planner {
    /// Prompts derived from the taxonomy shape.
    Taxonomy,
    /// Prompts written by the model from a demonstration plan.
    Model,
}

/// Search and entailment backends for the reference stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReferenceSources {
    pub search_fixture: Option<PathBuf>,
    pub search_endpoint: Option<String>,
    pub nli_fixture: Option<PathBuf>,
    pub nli_endpoint: Option<String>,
}

impl ReferenceSources {
    pub fn is_configured(&self) -> bool {
        (self.search_fixture.is_some() || self.search_endpoint.is_some())
            && (self.nli_fixture.is_some() || self.nli_endpoint.is_some())
    }

    fn clients(&self) -> Result<(Box<dyn SearchClient>, Box<dyn NliClient>)> {
        let timeout = Duration::from_secs(30);
        let search: Box<dyn SearchClient> = match (&self.search_fixture, &self.search_endpoint) {
            (Some(p), _) => Box::new(ScriptedSearch::from_file(p).at(Stage::Input)?),
            (None, Some(url)) => {
                Box::new(HttpSearchClient::new(url.clone(), timeout).map_err(|e| PipelineError::input(Stage::Input, e))?)
            }
            (None, None) => return Err(PipelineError::input(Stage::Input, "no search backend configured")),
        };
        let nli: Box<dyn NliClient> = match (&self.nli_fixture, &self.nli_endpoint) {
            (Some(p), _) => Box::new(ScriptedNli::from_file(p).at(Stage::Input)?),
            (None, Some(url)) => {
                Box::new(HttpNliClient::new(url.clone(), timeout).map_err(|e| PipelineError::input(Stage::Input, e))?)
            }
            (None, None) => return Err(PipelineError::input(Stage::Input, "no entailment backend configured")),
        };
        Ok((search, nli))
    }
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    /// The first taxonomy holds the goal target; the rest are extra context
    /// for the model planner.
    pub taxonomies: Vec<PathBuf>,
    pub kpi: String,
    pub target: String,
    pub method: Option<String>,
    pub asset_class: String,
    pub asset_description: Option<String>,
    pub strategy: Strategy,
    pub planner: Planner,
    pub gateway: GatewaySource,
    pub record: Option<PathBuf>,
    pub references: ReferenceSources,
    pub max_rounds: usize,
    pub confidence_threshold: f64,
    pub seed: u64,
    pub assets: usize,
    /// Run timestamp; defaults to the fixed epoch for offline gateways and
    /// to the wall clock for live ones.
    pub timestamp: Option<DateTime<Utc>>,
    pub out: PathBuf,
}

impl RunSpec {
    pub fn new(taxonomy: impl Into<PathBuf>, kpi: &str, target: &str, gateway: GatewaySource, out: impl Into<PathBuf>) -> Self {
        Self {
            taxonomies: vec![taxonomy.into()],
            kpi: kpi.to_string(),
            target: target.to_string(),
            method: None,
            asset_class: String::new(),
            asset_description: None,
            strategy: Strategy::AllQ,
            planner: Planner::Taxonomy,
            gateway,
            record: None,
            references: ReferenceSources::default(),
            max_rounds: refinement::DEFAULT_MAX_ROUNDS,
            confidence_threshold: refinement::DEFAULT_THRESHOLD,
            seed: 0,
            assets: DEFAULT_ASSETS,
            timestamp: None,
            out: out.into(),
        }
    }

    pub fn goal(&self) -> Goal {
        let method = self.method.clone().unwrap_or_else(|| format!("from its {}", self.target));
        Goal::new(&self.kpi, &self.target, &method)
    }

    fn started_at(&self) -> DateTime<Utc> {
        self.timestamp.unwrap_or_else(|| if self.gateway.is_live() { Utc::now() } else { synthetic_epoch() })
    }
}

/// Opens the configured gateway, wrapped in a recorder when asked.
pub fn open_gateway(source: &GatewaySource, record: Option<&Path>) -> Result<Box<dyn ChatModel>> {
    let inner: Box<dyn ChatModel> = match source {
        GatewaySource::Live(cfg) => Box::new(GatewayConfig::from_yaml_file(cfg).at(Stage::Input)?.connect().at(Stage::Input)?),
        GatewaySource::Script(p) => Box::new(ScriptedModel::from_yaml_file(p).at(Stage::Input)?),
        GatewaySource::Replay(p) => Box::new(Replay::from_file(p).at(Stage::Input)?),
    };
    Ok(match record {
        Some(path) => Box::new(Recorder::to_file(inner, path).at(Stage::Input)?),
        None => inner,
    })
}

pub fn load_taxonomy(path: &Path) -> Result<Taxonomy> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::input(Stage::Input, format!("{}: {e}", path.display())))?;
    Taxonomy::parse(&text).map_err(|e| PipelineError::input(Stage::Input, format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: impl AsRef<[u8]>, stage: Stage) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::internal(stage, format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| PipelineError::internal(stage, format!("{}: {e}", path.display())))
}

fn read(path: &Path, stage: Stage) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PipelineError::input(stage, format!("{}: {e}", path.display())))
}

/// Builds the prompt sequence (with code steps resolved) without writing it.
pub fn plan(spec: &RunSpec, gateway: Option<&dyn ChatModel>, reg: &PromptRegistry) -> Result<PromptSequence> {
    let Some(first) = spec.taxonomies.first() else {
        return Err(PipelineError::input(Stage::Input, "no taxonomy given"));
    };
    let primary = load_taxonomy(first)?;
    let goal = spec.goal();
    let seq = match spec.planner {
        Planner::Taxonomy => generate_sequence_deterministic(&primary, &goal, reg).at(Stage::Plan)?,
        Planner::Model => {
            let gateway = gateway.ok_or_else(|| PipelineError::input(Stage::Plan, "the model planner needs a gateway"))?;
            let mut all = vec![primary.clone()];
            for p in &spec.taxonomies[1..] {
                all.push(load_taxonomy(p)?);
            }
            let refs: Vec<&Taxonomy> = all.iter().collect();
            goal.bound_in(&refs).at(Stage::Plan)?;
            let session = build_planning_context(&refs, fixtures::PLAN_DEMONSTRATION, &goal, reg).at(Stage::Plan)?;
            let reply = gateway.complete(&session).at(Stage::Plan)?;
            let mut seq = parse_plan(&reply).at(Stage::Plan)?;
            seq.goal = Some(goal);
            seq
        }
    };
    resolve_code_steps(&seq, &primary, reg).at(Stage::Plan)
}

/// `plan`: writes the resolved sequence to `<out>/plan.yaml`.
pub fn cmd_plan(spec: &RunSpec) -> Result<PromptSequence> {
    let reg = PromptRegistry::seeded();
    let gateway = match spec.planner {
        Planner::Model => Some(open_gateway(&spec.gateway, spec.record.as_deref())?),
        Planner::Taxonomy => None,
    };
    let seq = plan(spec, gateway.as_deref(), &reg)?;
    write(&spec.out.join(PLAN_FILE), seq.to_yaml(), Stage::Plan)?;
    write(&spec.out.join("plan.txt"), format_plan(&seq), Stage::Plan)?;
    Ok(seq)
}

/// Outcome of a full `generate` run.
#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub index: RecipeIndex,
    pub recipe_dir: PathBuf,
    pub sequence: PromptSequence,
    pub document: KnowledgeDocument,
    pub cited: Option<CitedDocument>,
    pub indicators: HealthIndicatorConfig,
    pub aggregation: AggregationConfig,
    pub dataset: SampleDataset,
}

struct RunLog {
    path: PathBuf,
    lines: Vec<String>,
}

impl RunLog {
    fn note(&mut self, stage: Stage, message: impl fmt::Display) {
        let line = format!("[{stage}] {message}");
        log::info!("{line}");
        self.lines.push(line);
    }

    fn flush(&self) {
        let _ = fs::create_dir_all(self.path.parent().unwrap_or(Path::new(".")));
        let _ = fs::write(&self.path, self.lines.join("\n") + "\n");
    }
}

/// The fenced YAML block of a reply, or the whole reply when unfenced.
pub fn yaml_block(reply: &str) -> &str {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)```(?:ya?ml)?[ \t]*\n(.*?)```").unwrap());
    re.captures(reply).and_then(|c| c.get(1)).map_or(reply, |m| m.as_str())
}

/// `generate`: plan, describe, execute, cite, configure, sample and bundle.
pub fn cmd_generate(spec: &RunSpec) -> Result<GenerateReport> {
    if spec.asset_class.trim().is_empty() {
        return Err(PipelineError::input(Stage::Input, "asset class is required"));
    }
    let reg = PromptRegistry::seeded();
    let gateway = open_gateway(&spec.gateway, spec.record.as_deref())?;
    let logs = spec.out.join(LOG_DIR);
    let mut log = RunLog { path: logs.join("pipeline.log"), lines: Vec::new() };
    let result = generate_stages(spec, gateway.as_ref(), &reg, &logs, &mut log);
    if let Err(e) = &result {
        log.lines.push(format!("error: {e}"));
    }
    log.flush();
    result
}

fn generate_stages(
    spec: &RunSpec,
    gateway: &dyn ChatModel,
    reg: &PromptRegistry,
    logs: &Path,
    log: &mut RunLog,
) -> Result<GenerateReport> {
    let started_at = spec.started_at();

    let seq = plan(spec, Some(gateway), reg)?;
    log.note(Stage::Plan, format!("{} steps, order {}", seq.len(), seq.execution_order));
    write(&logs.join("plan.txt"), format_plan(&seq), Stage::Plan)?;

    let description = match &spec.asset_description {
        Some(d) if !d.trim().is_empty() => d.clone(),
        _ => {
            let question = reg.render(ids::REFINE_INITIAL, &bindings([("asset_class", spec.asset_class.as_str())])).at(Stage::Describe)?;
            let opts = RefineOptions { max_rounds: spec.max_rounds, threshold: spec.confidence_threshold, ..Default::default() };
            let res = refinement::refine(gateway, reg, &question, opts).at(Stage::Describe)?;
            write(&logs.join("refinement.csv"), records_csv(&res.records), Stage::Describe)?;
            log.note(Stage::Describe, format!("{} rounds, stop: {:?}", res.records.len(), res.stop_reason));
            res.final_answer
                .ok_or_else(|| PipelineError::gateway(Stage::Describe, "no round reached the confidence threshold"))?
        }
    };

    let seq = materialize_sequence(&seq, &spec.asset_class, &description).at(Stage::Materialize)?;

    let clock = LogicalClock::new(started_at);
    let role = RoleProfile::new(RoleName::DomainExpert);
    let (doc, transcript) = execution_engine::execute(&seq, spec.strategy, &role, reg, gateway, &clock).at(Stage::Execute)?;
    write(&logs.join("transcript.jsonl"), transcript.to_jsonl(), Stage::Execute)?;
    log.note(Stage::Execute, format!("{} user turns, {} parts", transcript.count(ChatRole::User), doc.parts.len()));

    let cited = if spec.references.is_configured() {
        let (search, nli) = spec.references.clients()?;
        let pipeline = ReferencePipeline::new(search.as_ref(), nli.as_ref());
        let cited = pipeline.run(&doc, gateway, reg).at(Stage::References)?;
        write(
            &logs.join("evidence.json"),
            serde_json::to_string_pretty(&cited.evidence).map_err(|e| PipelineError::internal(Stage::References, e))?,
            Stage::References,
        )?;
        log.note(
            Stage::References,
            format!("claims {:?}, identified {:?}, validated {:?}", cited.counts.claims, cited.counts.identified_urls, cited.counts.validated_urls),
        );
        Some(cited)
    } else {
        log.note(Stage::References, "skipped: no search or entailment backend");
        None
    };
    let knowledge = cited.as_ref().map_or_else(|| doc.to_markdown(), CitedDocument::to_markdown);

    let (indicators, aggregation) = configs(gateway, reg, &spec.asset_class, &description, &doc)?;
    log.note(Stage::Configs, format!("{} sensors, {} aggregation", indicators.sensors.len(), aggregation.method_name()));

    let dataset = generate_synthetic(&indicators, spec.assets, spec.seed).at(Stage::Dataset)?;
    log.note(Stage::Dataset, format!("{} rows", dataset.rows.len()));

    let mut estimator = HealthEstimator::new();
    estimator.fit(&indicators, &aggregation).at(Stage::Bundle)?;
    let scores = estimator.predict(&dataset).at(Stage::Bundle)?;

    let model = ModelDescriptor {
        name: format!("{} estimator", spec.kpi.to_lowercase()),
        method: aggregation.method_name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let run = RunMetadata {
        seed: spec.seed,
        created_at: started_at.to_rfc3339(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        extra: [
            ("strategy".to_string(), spec.strategy.tag().to_string()),
            ("planner".to_string(), format!("{:?}", spec.planner).to_lowercase()),
            ("transcript_sha256".to_string(), transcript.digest()),
        ]
        .into(),
    };
    let mut recipe = Recipe::new(&spec.kpi, &spec.asset_class);
    recipe.knowledge_doc = Some(knowledge);
    recipe.indicator_config = Some(indicators.clone());
    recipe.aggregation_config = Some(aggregation.clone());
    recipe.sample_dataset = Some(dataset.clone());
    recipe.wrapper = Some(WrapperManifest::standard(model.clone(), run));
    recipe.model_ref = Some(model);
    let recipe_dir = spec.out.join(RECIPE_DIR);
    let index = bundle(&recipe, &recipe_dir).at(Stage::Bundle)?;
    write(&spec.out.join(crate::recipe_store::SCORES_FILE), scores_csv(&scores), Stage::Bundle)?;
    log.note(Stage::Bundle, format!("{} artifacts in {}", index.artifacts.len(), recipe_dir.display()));

    Ok(GenerateReport { index, recipe_dir, sequence: seq, document: doc, cited, indicators, aggregation, dataset })
}

/// Asks the data-scientist role for the indicator and aggregation configs.
pub fn configs(
    gateway: &dyn ChatModel,
    reg: &PromptRegistry,
    asset_class: &str,
    asset_description: &str,
    doc: &KnowledgeDocument,
) -> Result<(HealthIndicatorConfig, AggregationConfig)> {
    let stage = Stage::Configs;
    let role = RoleProfile::new(RoleName::DataScientist);
    let system = crate::prompt_registry::instantiate_text(
        reg.system_prompt(&role).at(stage)?.body(),
        &bindings([("asset_class", asset_class), ("asset_description", asset_description)]),
    )
    .at(stage)?
    .text;
    let mut session = vec![
        ChatMessage::system(system),
        ChatMessage::user(format!("{}\n\n{}", doc.to_markdown().trim_end(), reg.get(ids::INDICATOR_CONFIG).at(stage)?.body())),
    ];
    let reply = gateway.complete(&session).at(stage)?;
    let indicators = HealthIndicatorConfig::from_yaml(yaml_block(&reply)).at(stage)?;
    indicators.validate().at(stage)?;

    session.push(ChatMessage::assistant(reply));
    session.push(ChatMessage::user(reg.get(ids::AGGREGATION_CONFIG).at(stage)?.body()));
    let reply = gateway.complete(&session).at(stage)?;
    let aggregation = AggregationConfig::from_yaml(yaml_block(&reply)).at(stage)?;
    let violations = aggregation.violations(Some(&indicators));
    if !violations.is_empty() {
        return Err(PipelineError::input(stage, format!("aggregation config: {}", violations.join("; "))));
    }
    Ok((indicators, aggregation))
}

/// `score`: validates the configs and dataset, then scores every asset.
/// Returns the CSV that was written to `out` (when given).
pub fn cmd_score(indicators: &Path, aggregation: &Path, dataset: &Path, out: Option<&Path>) -> Result<String> {
    let stage = Stage::Score;
    let ind = HealthIndicatorConfig::from_yaml(&read(indicators, stage)?).at(stage)?;
    let agg = AggregationConfig::from_yaml(&read(aggregation, stage)?).at(stage)?;
    let data = SampleDataset::from_csv(&read(dataset, stage)?).at(stage)?;
    let mut report: Vec<String> = ind.violations();
    report.extend(agg.violations(Some(&ind)));
    report.extend(data.violations(&ind));
    if !report.is_empty() {
        return Err(PipelineError::input(stage, format!("validation failed:\n  - {}", report.join("\n  - "))));
    }
    let mut est = HealthEstimator::new();
    est.fit(&ind, &agg).at(stage)?;
    let csv = scores_csv(&est.predict(&data).at(stage)?);
    if let Some(path) = out {
        write(path, &csv, stage)?;
    }
    Ok(csv)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub document: String,
    pub tokens: usize,
    pub ttr: f64,
    /// Against the first document.
    pub coverage: f64,
    pub similarity: f64,
}

/// `metrics`: length, TTR, and coverage/similarity against the first document.
pub fn cmd_metrics(docs: &[PathBuf]) -> Result<Vec<MetricsRow>> {
    let stage = Stage::Metrics;
    let Some(first) = docs.first() else {
        return Err(PipelineError::input(stage, "no documents given"));
    };
    let base = read(first, stage)?;
    docs.iter()
        .map(|p| {
            let text = read(p, stage)?;
            let tag = |r: std::result::Result<f64, MetricsError>| {
                r.map_err(|e| PipelineError::input(stage, format!("{}: {e}", p.display())))
            };
            Ok(MetricsRow {
                document: p.display().to_string(),
                tokens: text_metrics::token_count(&text),
                ttr: tag(text_metrics::ttr(&text))?,
                coverage: tag(text_metrics::coverage(&base, &text))?,
                similarity: tag(text_metrics::lexical_similarity(&base, &text))?,
            })
        })
        .collect()
}

pub fn metrics_table(rows: &[MetricsRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("metrics rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// `verify-refs`: cites an existing knowledge document.
pub fn cmd_verify_refs(
    document: &Path,
    gateway: &GatewaySource,
    record: Option<&Path>,
    sources: &ReferenceSources,
    out: &Path,
) -> Result<CitedDocument> {
    let stage = Stage::References;
    let doc = KnowledgeDocument::from_markdown(&read(document, stage)?);
    let gw = open_gateway(gateway, record)?;
    let (search, nli) = sources.clients()?;
    let cited = ReferencePipeline::new(search.as_ref(), nli.as_ref()).run(&doc, gw.as_ref(), &PromptRegistry::seeded()).at(stage)?;
    write(&out.join("cited.md"), cited.to_markdown(), stage)?;
    write(
        &out.join("evidence.json"),
        serde_json::to_string_pretty(&cited.evidence).map_err(|e| PipelineError::internal(stage, e))?,
        stage,
    )?;
    Ok(cited)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaml_blocks() {
        assert_eq!(yaml_block("Here:\n```yaml\na: 1\n```\nDone"), "a: 1\n");
        assert_eq!(yaml_block("```\nb: 2\n```"), "b: 2\n");
        assert_eq!(yaml_block("c: 3"), "c: 3");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::input(Stage::Plan, "x").exit_code(), 2);
        assert_eq!(PipelineError::gateway(Stage::Execute, "x").exit_code(), 3);
        assert_eq!(PipelineError::internal(Stage::Bundle, "x").exit_code(), 4);
        let e: Result<()> = Err(ExecutionError::EmptyReply(1)).at(Stage::Execute);
        assert_eq!(e.unwrap_err().to_string(), "[execute] empty reply for step 1");
    }
}
