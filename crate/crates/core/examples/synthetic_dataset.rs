//! Generate a seeded sample dataset from an indicator config and validate it.
//!
//! ```text
//! cargo run --example synthetic_dataset -- 3 42
//! ```

use std::path::Path;

use autorecipe::recipe_store::{generate_synthetic, HealthIndicatorConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let assets: usize = args.next().map_or(3, |a| a.parse().expect("asset count"));
    let seed: u64 = args.next().map_or(42, |a| a.parse().expect("seed"));

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/configs/health_indicators.yaml");
    let cfg = HealthIndicatorConfig::from_yaml(&std::fs::read_to_string(path).unwrap()).unwrap();
    let data = generate_synthetic(&cfg, assets, seed).unwrap();
    assert!(data.violations(&cfg).is_empty());
    print!("{}", data.to_csv());
}
