//! Confidence-gated refinement of an asset description, with the
//! per-round length, coverage and similarity against round one.
//!
//! ```text
//! cargo run --example refine_description
//! ```

use std::path::Path;

use autorecipe::model_gateway::ScriptedModel;
use autorecipe::prompt_registry::{bindings, ids, PromptRegistry};
use autorecipe::refinement::{iteration_metrics, records_csv, refine, RefineOptions};

fn main() {
    let reg = PromptRegistry::seeded();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/refinement/furnace_rounds.yaml");
    let gateway = ScriptedModel::from_yaml_file(&path).unwrap();
    let question = reg.render(ids::REFINE_INITIAL, &bindings([("asset_class", "Industrial Furnace")])).unwrap();

    let result = refine(&gateway, &reg, &question, RefineOptions::default()).unwrap();
    println!("stopped: {:?} after {} rounds\n", result.stop_reason, result.records.len());
    print!("{}", records_csv(&result.records));

    println!("\nround  length  coverage  similarity");
    for m in iteration_metrics(&result.records, None) {
        println!("{:>5}  {:>6}  {:>8.1}  {:>10.3}", m.round, m.length, m.coverage, m.similarity);
    }
}
