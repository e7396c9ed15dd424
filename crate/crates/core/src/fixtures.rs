//! Embedded reference material: the two KPI taxonomies, the planning
//! demonstration and two recorded planner replies, plus the shipped prompt texts.

use crate::taxonomy::Taxonomy;

pub const ASSET_HEALTH_TAXONOMY: &str = include_str!("../fixtures/taxonomies/asset_health.yaml");
pub const ASSET_SUSTAINABILITY_TAXONOMY: &str =
    include_str!("../fixtures/taxonomies/asset_sustainability.yaml");

/// One-shot planning demonstration (goal, think blocks, 11 steps, execution order).
pub const PLAN_DEMONSTRATION: &str = include_str!("../fixtures/plans/demonstration.txt");
/// Planner reply for "Analyze the asset health using asset profile information".
pub const PLAN_RESPONSE_ASSET_PROFILE: &str = include_str!("../fixtures/plans/response1.txt");
/// Planner reply for "Analyze the Asset Sustainability from it Environmental Impact".
pub const PLAN_RESPONSE_ENVIRONMENTAL: &str = include_str!("../fixtures/plans/response2.txt");

pub(crate) mod prompts {
    pub const DOMAIN_EXPERT_SYSTEM: &str = include_str!("../fixtures/prompts/domain_expert.system.txt");
    pub const DATA_SCIENTIST_SYSTEM: &str = include_str!("../fixtures/prompts/data_scientist.system.txt");
    pub const KNOWLEDGE_EXTRACTION: &str = include_str!("../fixtures/prompts/knowledge_extraction.user.txt");
    pub const INDICATOR_CONFIG: &str = include_str!("../fixtures/prompts/indicator_config.user.txt");
    pub const AGGREGATION_CONFIG: &str = include_str!("../fixtures/prompts/aggregation_config.user.txt");
    pub const SAMPLE_DATASET: &str = include_str!("../fixtures/prompts/sample_dataset.user.txt");
    pub const SYNTHETIC_CODE: &str = include_str!("../fixtures/prompts/synthetic_code.user.txt");
    pub const MODEL: &str = include_str!("../fixtures/prompts/model.user.txt");
    pub const WRAPPER: &str = include_str!("../fixtures/prompts/wrapper.user.txt");
    pub const REFINE_SYSTEM: &str = include_str!("../fixtures/prompts/refine.system.txt");
    pub const REFINE_INITIAL: &str = include_str!("../fixtures/prompts/refine_initial.user.txt");
    pub const REFINE_BETTERMENT: &str = include_str!("../fixtures/prompts/refine_betterment.txt");
    pub const PLANNER_SYSTEM: &str = include_str!("../fixtures/prompts/planner.system.txt");
    pub const REACT_USER: &str = include_str!("../fixtures/prompts/react.user.txt");
    pub const CLAIMS_SYSTEM: &str = include_str!("../fixtures/prompts/claims.system.txt");
    pub const CLAIMS_USER: &str = include_str!("../fixtures/prompts/claims.user.txt");
    pub const PLAN_STEPS: &str = include_str!("../fixtures/prompts/plan_steps.yaml");
}

pub fn asset_health_taxonomy() -> Taxonomy {
    Taxonomy::parse(ASSET_HEALTH_TAXONOMY).expect("embedded asset health taxonomy is valid")
}

pub fn asset_sustainability_taxonomy() -> Taxonomy {
    Taxonomy::parse(ASSET_SUSTAINABILITY_TAXONOMY).expect("embedded sustainability taxonomy is valid")
}
