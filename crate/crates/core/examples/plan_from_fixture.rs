//! Two ways to get a prompt sequence: parse a model-written plan, or derive
//! one from the taxonomy. Code steps are then resolved against the taxonomy.
//!
//! ```text
//! cargo run --example plan_from_fixture
//! ```

use autorecipe::fixtures::{self, asset_health_taxonomy};
use autorecipe::plan_generator::{format_plan, generate_sequence_deterministic, parse_plan, resolve_code_steps, Goal};
use autorecipe::prompt_registry::PromptRegistry;

fn main() {
    let reg = PromptRegistry::seeded();
    let tax = asset_health_taxonomy();

    let written = parse_plan(fixtures::PLAN_DEMONSTRATION).unwrap();
    println!("model-written plan: {} steps, order {}", written.len(), written.execution_order);
    let resolved = resolve_code_steps(&written, &tax, &reg).unwrap();
    println!("step 10 after resolution:\n  {}\n", resolved.steps[9].body);

    let goal = Goal::new("asset health", "asset profile", "from its asset profile");
    let derived = generate_sequence_deterministic(&tax, &goal, &reg).unwrap();
    print!("{}", format_plan(&derived));
}
