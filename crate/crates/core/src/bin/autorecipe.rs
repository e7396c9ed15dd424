//! Command-line entry point. Exit codes: 0 ok, 2 input or validation,
//! 3 gateway, 4 internal.

use std::path::PathBuf;
use std::process::ExitCode;

use autorecipe::execution_engine::Strategy;
use autorecipe::pipeline::{
    self, GatewaySource, PipelineError, Planner, ReferenceSources, RunSpec, Stage, DEFAULT_ASSETS,
};
use autorecipe::refinement::{DEFAULT_MAX_ROUNDS, DEFAULT_THRESHOLD};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "autorecipe", version, about = "Generate condition-based maintenance solution recipes from KPI taxonomies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the prompt sequence for a goal and write it to <out>/plan.yaml.
    Plan(RunArgs),
    /// Run the whole pipeline and write a recipe bundle to <out>/recipe.
    Generate(RunArgs),
    /// Score every asset in a dataset.
    Score(ScoreArgs),
    /// Length, TTR, coverage and similarity of documents against the first.
    Metrics(MetricsArgs),
    /// Attach verified references to a knowledge document.
    VerifyRefs(VerifyArgs),
}

#[derive(Args)]
struct GatewayArgs {
    /// YAML config of an OpenAI-compatible chat endpoint.
    #[arg(long, value_name = "FILE")]
    gateway_config: Option<PathBuf>,
    /// YAML file of scripted replies, served in order.
    #[arg(long, value_name = "FILE")]
    script: Option<PathBuf>,
    /// JSONL session store to replay.
    #[arg(long, value_name = "FILE")]
    replay: Option<PathBuf>,
    /// Record every session and reply to this JSONL store.
    #[arg(long, value_name = "FILE")]
    record: Option<PathBuf>,
}

impl GatewayArgs {
    fn source(&self) -> Result<GatewaySource, PipelineError> {
        match (&self.gateway_config, &self.script, &self.replay) {
            (Some(p), None, None) => Ok(GatewaySource::Live(p.clone())),
            (None, Some(p), None) => Ok(GatewaySource::Script(p.clone())),
            (None, None, Some(p)) => Ok(GatewaySource::Replay(p.clone())),
            _ => Err(PipelineError::input(Stage::Input, "give exactly one of --gateway-config, --script, --replay")),
        }
    }
}

#[derive(Args)]
struct ReferenceArgs {
    /// YAML search fixture (results and page texts).
    #[arg(long, value_name = "FILE")]
    search_fixture: Option<PathBuf>,
    /// HTTP search endpoint, used when no fixture is given.
    #[arg(long, value_name = "URL")]
    search_endpoint: Option<String>,
    /// YAML entailment fixture.
    #[arg(long, value_name = "FILE")]
    nli_fixture: Option<PathBuf>,
    /// HTTP entailment endpoint, used when no fixture is given.
    #[arg(long, value_name = "URL")]
    nli_endpoint: Option<String>,
}

impl ReferenceArgs {
    fn sources(&self) -> ReferenceSources {
        ReferenceSources {
            search_fixture: self.search_fixture.clone(),
            search_endpoint: self.search_endpoint.clone(),
            nli_fixture: self.nli_fixture.clone(),
            nli_endpoint: self.nli_endpoint.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerArg {
    Taxonomy,
    Model,
}

#[derive(Args)]
struct RunArgs {
    /// Taxonomy YAML; repeat to give the model planner extra context.
    #[arg(long, required = true, value_name = "FILE")]
    taxonomy: Vec<PathBuf>,
    #[arg(long)]
    kpi: String,
    /// Taxonomy node the goal focuses on.
    #[arg(long)]
    target: String,
    /// How the goal reads after the KPI, e.g. "from its component quality".
    #[arg(long)]
    method: Option<String>,
    #[arg(long, default_value = "")]
    asset_class: String,
    /// Generated through refinement when absent.
    #[arg(long)]
    asset_description: Option<String>,
    #[arg(long, default_value = "allq", value_parser = ["lastq", "allq", "allqcot", "allqreact", "gitq"])]
    strategy: String,
    #[arg(long, value_enum, default_value = "taxonomy")]
    planner: PlannerArg,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[command(flatten)]
    references: ReferenceArgs,
    #[arg(long, default_value_t = DEFAULT_MAX_ROUNDS)]
    max_rounds: usize,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    confidence_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Assets in the sample dataset.
    #[arg(long, default_value_t = DEFAULT_ASSETS)]
    assets: usize,
    /// RFC 3339 run timestamp.
    #[arg(long)]
    timestamp: Option<DateTime<Utc>>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn spec(&self, needs_gateway: bool) -> Result<RunSpec, PipelineError> {
        let gateway = match self.gateway.source() {
            Ok(g) => g,
            Err(_) if !needs_gateway => GatewaySource::Script(PathBuf::new()),
            Err(e) => return Err(e),
        };
        let strategy: Strategy = self.strategy.parse().map_err(|e| PipelineError::input(Stage::Input, e))?;
        let mut spec = RunSpec::new(&self.taxonomy[0], &self.kpi, &self.target, gateway, &self.out);
        spec.taxonomies = self.taxonomy.clone();
        spec.method = self.method.clone();
        spec.asset_class = self.asset_class.clone();
        spec.asset_description = self.asset_description.clone();
        spec.strategy = strategy;
        spec.planner = match self.planner {
            PlannerArg::Taxonomy => Planner::Taxonomy,
            PlannerArg::Model => Planner::Model,
        };
        spec.record = self.gateway.record.clone();
        spec.references = self.references.sources();
        spec.max_rounds = self.max_rounds;
        spec.confidence_threshold = self.confidence_threshold;
        spec.seed = self.seed;
        spec.assets = self.assets;
        spec.timestamp = self.timestamp;
        Ok(spec)
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, value_name = "FILE")]
    indicators: PathBuf,
    #[arg(long, value_name = "FILE")]
    aggregation: PathBuf,
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    /// Scores CSV; printed to stdout when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(required = true, value_name = "DOCUMENT")]
    documents: Vec<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Knowledge document markdown.
    #[arg(long, value_name = "FILE")]
    document: PathBuf,
    #[command(flatten)]
    gateway: GatewayArgs,
    #[command(flatten)]
    references: ReferenceArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Plan(args) => {
            let spec = args.spec(matches!(args.planner, PlannerArg::Model))?;
            let seq = pipeline::cmd_plan(&spec)?;
            println!("{} steps written to {}", seq.len(), spec.out.join(pipeline::PLAN_FILE).display());
        }
        Command::Generate(args) => {
            let report = pipeline::cmd_generate(&args.spec(true)?)?;
            for (name, entry) in &report.index.artifacts {
                println!("{name}\t{}\t{}", entry.path, entry.sha256);
            }
        }
        Command::Score(a) => {
            let csv = pipeline::cmd_score(&a.indicators, &a.aggregation, &a.dataset, a.out.as_deref())?;
            if a.out.is_none() {
                print!("{csv}");
            }
        }
        Command::Metrics(a) => print!("{}", pipeline::metrics_table(&pipeline::cmd_metrics(&a.documents)?)),
        Command::VerifyRefs(a) => {
            let cited = pipeline::cmd_verify_refs(
                &a.document,
                &a.gateway.source()?,
                a.gateway.record.as_deref(),
                &a.references.sources(),
                &a.out,
            )?;
            println!(
                "claims {:?}  identified {:?}  validated {:?}",
                cited.counts.claims, cited.counts.identified_urls, cited.counts.validated_urls
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
