//! Load a KPI taxonomy, walk it top-down, and ask which branches end in
//! measurements.
//!
//! ```text
//! cargo run --example taxonomy_walk
//! ```

use autorecipe::fixtures::asset_health_taxonomy;

fn main() {
    let tax = asset_health_taxonomy();
    println!("{}\n", tax.description());

    for id in tax.traverse_top_down(tax.root_id().as_str()).unwrap() {
        let node = tax.node(id.as_str()).unwrap();
        let measured = tax.has_measurement_descendant(id.as_str()).unwrap();
        let sensor = tax.descendant_mentions(id.as_str(), "sensor").unwrap();
        println!("{:<28} {:<12} measured below: {:<5} mentions sensor: {}", node.label, format!("{:?}", node.kind), measured, sensor);
    }
}
