//! Run one materialized sequence under all five strategies against a
//! scripted model and compare what each sends.
//!
//! ```text
//! cargo run --example execute_strategies
//! ```

use autorecipe::execution_engine::{execute, LogicalClock, Strategy};
use autorecipe::fixtures;
use autorecipe::model_gateway::{ChatRole, ScriptedModel};
use autorecipe::plan_generator::{materialize_sequence, parse_plan};
use autorecipe::prompt_registry::{PromptRegistry, RoleName, RoleProfile};

const REPLY: &str = "Final Answer:
## Part 1: Wind Turbine
A wind turbine converts the kinetic energy of wind into electrical energy.

## Part 2: Environmental Impact
Noise level and ecological consequence dominate.

## Part 3: Sensors
- Noise: a sound level meter, because it reports decibels directly.";

fn main() {
    let reg = PromptRegistry::seeded();
    let seq = parse_plan(fixtures::PLAN_RESPONSE_ENVIRONMENTAL).unwrap();
    let seq = materialize_sequence(&seq, "Wind Turbine", "A wind turbine is a device that converts wind into electricity.").unwrap();
    let role = RoleProfile::new(RoleName::DomainExpert);

    for strategy in Strategy::ALL {
        let gateway = ScriptedModel::responder(|_| Some(REPLY.to_string()));
        let (doc, transcript) = execute(&seq, strategy, &role, &reg, &gateway, &LogicalClock::default()).unwrap();
        let prompt_chars: usize = transcript.records.iter().filter(|r| r.role == ChatRole::User).map(|r| r.content.len()).sum();
        println!(
            "{:<10} user turns {:>2}  prompt chars {:>6}  parts {}  transcript {}",
            strategy.tag(),
            transcript.count(ChatRole::User),
            prompt_chars,
            doc.parts.len(),
            &transcript.digest()[..12]
        );
    }
}
