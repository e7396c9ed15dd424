//! Taxonomy-guided generation of condition-based maintenance solution recipes.
//!
//! A KPI taxonomy and an asset class go in; a validated bundle comes out,
//! holding a cited knowledge document, health-indicator and aggregation
//! configs, a sample dataset and a wrapper manifest. Every model call goes
//! through [`model_gateway::ChatModel`], so the whole pipeline runs offline
//! against scripted or recorded replies.

pub mod execution_engine;
pub mod fixtures;
pub mod health_scoring;
pub mod model_gateway;
pub mod pipeline;
pub mod plan_generator;
pub mod prompt_registry;
pub mod recipe_store;
pub mod reference_pipeline;
pub mod refinement;
pub mod taxonomy;
pub mod text_metrics;
