//! The whole pipeline on the furnace fixtures: plan, describe, execute,
//! cite, configure, sample, bundle. Writes to a temporary directory unless
//! a path is given.
//!
//! ```text
//! cargo run --example generate_recipe -- /tmp/furnace-recipe
//! ```

use std::path::{Path, PathBuf};

use autorecipe::pipeline::{cmd_generate, GatewaySource, ReferenceSources, RunSpec};
use autorecipe::recipe_store::load_bundle;

fn main() {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("autorecipe-furnace"), PathBuf::from);

    let mut spec = RunSpec::new(
        fx.join("taxonomies/asset_health.yaml"),
        "asset health",
        "component quality",
        GatewaySource::Replay(fx.join("furnace/replay.jsonl")),
        &out,
    );
    spec.asset_class = "Industrial Furnace".into();
    spec.seed = 7;
    spec.references = ReferenceSources {
        search_fixture: Some(fx.join("furnace/search.yaml")),
        nli_fixture: Some(fx.join("furnace/nli.yaml")),
        ..Default::default()
    };

    let report = match cmd_generate(&spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    println!("bundle in {}", report.recipe_dir.display());
    for (name, a) in &report.index.artifacts {
        println!("  {name:<18} {:<24} {}", a.path, &a.sha256[..16]);
    }
    let recipe = load_bundle(&report.recipe_dir).unwrap();
    println!("reloaded {} / {}: {} dataset rows", recipe.asset_class, recipe.kpi, recipe.sample_dataset.unwrap().rows.len());
    println!("{}", std::fs::read_to_string(out.join("logs/pipeline.log")).unwrap());
}
