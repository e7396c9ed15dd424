//! Stage-level behaviour on the shipped fixtures.

use autorecipe::execution_engine::{execute, LogicalClock, PartLabel, Strategy};
use autorecipe::fixtures::{self, asset_health_taxonomy, asset_sustainability_taxonomy};
use autorecipe::model_gateway::{ChatRole, ScriptedModel};
use autorecipe::plan_generator::{
    build_planning_context, generate_sequence_deterministic, materialize_sequence, parse_plan, resolve_code_steps, Goal,
    StepKind,
};
use autorecipe::prompt_registry::{PromptRegistry, RoleName, RoleProfile};
use autorecipe::refinement::{iteration_metrics, refine, RefineOptions, StopReason};

#[test]
fn deterministic_plans_follow_the_taxonomy_shape() {
    let reg = PromptRegistry::seeded();
    let health = asset_health_taxonomy();
    let sust = asset_sustainability_taxonomy();
    for (tax, kpi, target, want) in [
        (&health, "asset health", "asset profile", 9),
        (&health, "asset health", "age", 5),
        (&health, "asset health", "component quality", 11),
        (&sust, "asset sustainability", "environmental impact", 11),
    ] {
        let goal = Goal::new(kpi, target, &format!("from its {target}"));
        let seq = generate_sequence_deterministic(tax, &goal, &reg).unwrap();
        assert_eq!(seq.len(), want, "{target}");
        assert_eq!(seq.steps.last().unwrap().kind, StepKind::Export);
        assert!(seq.execution_order.is_all_and());
    }
    let goal = Goal::new("asset health", "gearbox", "from its gearbox");
    assert!(generate_sequence_deterministic(&health, &goal, &reg).is_err());
}

#[test]
fn demonstration_code_step_becomes_a_sensor_question() {
    let reg = PromptRegistry::seeded();
    let seq = parse_plan(fixtures::PLAN_DEMONSTRATION).unwrap();
    let resolved = resolve_code_steps(&seq, &asset_health_taxonomy(), &reg).unwrap();
    assert_eq!(resolved.len(), 11);
    assert_eq!(resolved.steps[9].kind, StepKind::Question);
    assert!(resolved.steps[9].body.contains("continuous sensors"));
}

#[test]
fn code_step_without_measurements_is_dropped() {
    let reg = PromptRegistry::seeded();
    let retargeted = fixtures::PLAN_DEMONSTRATION
        .replace("node='component'", "node='asset profile'")
        .replace("takes the component as", "takes the asset profile as");
    let seq = parse_plan(&retargeted).unwrap();
    let resolved = resolve_code_steps(&seq, &asset_health_taxonomy(), &reg).unwrap();
    assert_eq!(resolved.len(), 10);
    assert!(resolved.steps.iter().all(|s| s.kind != StepKind::Code));
    assert_eq!(resolved.steps.iter().map(|s| s.index).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());
    assert_eq!(resolved.execution_order.indices().len(), 10);
}

#[test]
fn planning_context_carries_both_taxonomies() {
    let reg = PromptRegistry::seeded();
    let (h, s) = (asset_health_taxonomy(), asset_sustainability_taxonomy());
    let goal = Goal::new("asset sustainability", "environmental impact", "from it Environmental Impact");
    let session = build_planning_context(&[&s, &h], fixtures::PLAN_DEMONSTRATION, &goal, &reg).unwrap();
    let system = &session[0].content;
    assert!(system.contains(&format!("Here is the {} taxonomy.", s.name())));
    assert!(system.contains(&format!("Here is the {} taxonomy.", h.name())));
    assert_eq!(session.last().unwrap().content, "Goal: Analyze the asset sustainability from it Environmental Impact");
}

#[test]
fn materialized_response_runs_under_every_strategy() {
    let reg = PromptRegistry::seeded();
    let seq = parse_plan(fixtures::PLAN_RESPONSE_ENVIRONMENTAL).unwrap();
    let seq = materialize_sequence(&seq, "Industrial Furnace", "A furnace heats material.").unwrap();
    assert!(seq.steps[7].body.contains("Industrial Furnace"));
    let reply = "Thought: done\nFinal Answer:\n## Part 1: Overview\nText.\n\n## Part 2: Impact\nMore.\n\n## Part 3: Sensors\n- CO2 sensor";
    let role = RoleProfile::new(RoleName::DomainExpert);
    for s in Strategy::ALL {
        let gw = ScriptedModel::responder(move |_| Some(reply.to_string()));
        let (doc, t) = execute(&seq, s, &role, &reg, &gw, &LogicalClock::default()).unwrap();
        assert_eq!(doc.parts.len(), 3, "{s:?}");
        assert!(doc.part(PartLabel::Measurement).is_some());
        let turns = if s == Strategy::GITQ { 10 } else { 1 };
        assert_eq!(t.count(ChatRole::User), turns);
        assert_eq!(t.count(ChatRole::Assistant), turns);
    }
}

#[test]
fn furnace_refinement_grows_over_ten_rounds() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/refinement/furnace_rounds.yaml");
    let gw = ScriptedModel::from_yaml_file(&path).unwrap();
    let reg = PromptRegistry::seeded();
    let res = refine(&gw, &reg, "Describe Industrial Furnace, and its components.", RefineOptions::default()).unwrap();
    assert_eq!(res.records.len(), 10);
    assert_eq!(res.stop_reason, StopReason::MaxRounds);
    let rows = iteration_metrics(&res.records, None);
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[0].coverage, 100.0);
    assert!((rows[0].similarity - 1.0).abs() < 1e-12);
    let growing = rows.windows(2).filter(|w| w[1].length >= w[0].length).count() + 1;
    assert!(growing >= 8, "only {growing} non-decreasing rows");
    assert_eq!(gw.calls(), 10);
}

#[test]
fn refinement_context_holds_earlier_rounds() {
    let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
    let log = seen.clone();
    let gw = ScriptedModel::responder(move |s| {
        log.lock().unwrap().push(s[0].content.clone());
        Some(format!("answer {}\nConfidence: 90%", log.lock().unwrap().len()))
    });
    let opts = RefineOptions { max_rounds: 3, ..Default::default() };
    refine(&gw, &PromptRegistry::seeded(), "Describe Pump.", opts).unwrap();
    let systems = seen.lock().unwrap();
    for (k, sys) in systems.iter().enumerate() {
        assert_eq!(sys.matches("Question: Describe Pump.").count(), k);
    }
}
