//! Split a knowledge document into claims, search for each, check
//! entailment, and print the cited document.
//!
//! ```text
//! cargo run --example verify_references
//! ```

use std::path::Path;

use autorecipe::execution_engine::KnowledgeDocument;
use autorecipe::model_gateway::ScriptedModel;
use autorecipe::prompt_registry::PromptRegistry;
use autorecipe::reference_pipeline::{ReferencePipeline, ScriptedNli, ScriptedSearch};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/furnace");
    let script: serde_yaml::Value = serde_yaml::from_str(&std::fs::read_to_string(dir.join("script.yaml")).unwrap()).unwrap();
    let replies = script["replies"].as_sequence().unwrap();
    let doc = KnowledgeDocument::from_markdown(replies[3].as_str().unwrap());
    // Claim lists for the three parts, in order.
    let gateway = ScriptedModel::sequence(replies[4..7].iter().map(|r| r.as_str().unwrap().to_string()));

    let search = ScriptedSearch::from_file(&dir.join("search.yaml")).unwrap();
    let nli = ScriptedNli::from_file(&dir.join("nli.yaml")).unwrap();
    let cited = ReferencePipeline::new(&search, &nli).run(&doc, &gateway, &PromptRegistry::seeded()).unwrap();

    for e in &cited.evidence {
        println!("p{} c{} #{} {:<13?} {}", e.passage_id, e.claim_index, e.rank, e.verdict, e.url);
    }
    println!("\nclaims {:?}  identified {:?}  validated {:?}\n", cited.counts.claims, cited.counts.identified_urls, cited.counts.validated_urls);
    print!("{}", cited.to_markdown());
}
