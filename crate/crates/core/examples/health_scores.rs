//! Score a small fleet with weighted and AHP aggregation, and check the AHP
//! matrix for consistency.
//!
//! ```text
//! cargo run --example health_scores
//! ```

use std::path::Path;

use autorecipe::health_scoring::{ahp_weights, consistency_ratio, scores_csv, AggregationConfig, AggregationMethod, HealthEstimator};
use autorecipe::recipe_store::{generate_synthetic, HealthIndicatorConfig};

fn load(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs").join(name)).unwrap()
}

fn main() {
    let indicators = HealthIndicatorConfig::from_yaml(&load("health_indicators.yaml")).unwrap();
    let data = generate_synthetic(&indicators, 4, 11).unwrap();

    for file in ["aggregation_weighted.yaml", "aggregation_ahp.yaml"] {
        let agg = AggregationConfig::from_yaml(&load(file)).unwrap();
        if let AggregationMethod::Ahp { pairwise, .. } = &agg.method {
            println!("AHP weights {:?}, CR {:.2e}", ahp_weights(pairwise).unwrap(), consistency_ratio(pairwise).unwrap());
        }
        let mut est = HealthEstimator::new();
        est.fit(&indicators, &agg).unwrap();
        let scores = est.predict(&data).unwrap();
        println!("{file}\n{}", scores_csv(&scores));
        for c in &scores[0].breakdown {
            println!("  {}: {} -> {} x {:.3}", c.sensor, c.category, c.sub_score, c.weight);
        }
        println!();
    }
}
