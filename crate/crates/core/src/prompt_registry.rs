//! Prompt templates with `${name}` placeholders and a versioned registry of them.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::prompts;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("prompt '{0}' is already registered")]
    DuplicateId(String),
    #[error("no prompt registered under '{0}'")]
    UnknownId(String),
    #[error("missing bindings: {}", .0.join(", "))]
    MissingBinding(Vec<String>),
    #[error("role profile '{profile}' needs a system template, '{id}' is {role:?}")]
    NotSystemTemplate { profile: String, id: String, role: PromptRole },
    #[error("malformed registry file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptRole {
    System,
    User,
}

fn placeholder_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
}

/// Names of every `${name}` placeholder in `text`.
pub fn placeholders_in(text: &str) -> BTreeSet<String> {
    placeholder_pattern()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    role: PromptRole,
    body: String,
    required_placeholders: BTreeSet<String>,
}

/// Result of filling a template. Unused bindings are reported, not rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instantiated {
    pub text: String,
    pub unused_bindings: Vec<String>,
}

impl PromptTemplate {
    pub fn new(id: impl Into<String>, role: PromptRole, body: impl Into<String>) -> Self {
        let body = body.into();
        Self {
            id: id.into(),
            role,
            required_placeholders: placeholders_in(&body),
            body,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn role(&self) -> PromptRole {
        self.role
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required_placeholders
    }

    /// Replaces every placeholder. A binding to the empty string counts as missing.
    pub fn instantiate(&self, bindings: &BTreeMap<String, String>) -> Result<Instantiated, PromptError> {
        let out = instantiate_text(&self.body, bindings)?;
        if !out.unused_bindings.is_empty() {
            log::warn!("prompt '{}': unused bindings {}", self.id, out.unused_bindings.join(", "));
        }
        Ok(out)
    }
}

/// Template substitution over free text; the semantics used everywhere a
/// `${name}` placeholder is filled.
pub fn instantiate_text(body: &str, bindings: &BTreeMap<String, String>) -> Result<Instantiated, PromptError> {
    let required = placeholders_in(body);
    let missing: Vec<String> = required
        .iter()
        .filter(|name| bindings.get(*name).map_or(true, |v| v.is_empty()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(PromptError::MissingBinding(missing));
    }
    let text = placeholder_pattern()
        .replace_all(body, |c: &regex::Captures<'_>| bindings[&c[1]].clone())
        .into_owned();
    let unused_bindings: Vec<String> = bindings
        .keys()
        .filter(|k| !required.contains(*k))
        .cloned()
        .collect();
    Ok(Instantiated { text, unused_bindings })
}

/// Convenience for building binding maps from pairs.
pub fn bindings<K: Into<String>, V: Into<String>>(pairs: impl IntoIterator<Item = (K, V)>) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleName {
    DomainExpert,
    DataScientist,
    SystemArchitect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleProfile {
    pub name: RoleName,
    pub system_prompt_id: String,
}

impl RoleProfile {
    pub fn new(name: RoleName) -> Self {
        let system_prompt_id = match name {
            RoleName::DomainExpert => ids::DOMAIN_EXPERT_SYSTEM,
            RoleName::DataScientist => ids::DATA_SCIENTIST_SYSTEM,
            RoleName::SystemArchitect => ids::SYSTEM_ARCHITECT_SYSTEM,
        };
        Self { name, system_prompt_id: system_prompt_id.to_string() }
    }
}

/// Registry ids for the shipped prompts.
pub mod ids {
    pub const DOMAIN_EXPERT_SYSTEM: &str = "domain-expert.system";
    pub const DATA_SCIENTIST_SYSTEM: &str = "data-scientist.system";
    pub const SYSTEM_ARCHITECT_SYSTEM: &str = "system-architect.system";
    pub const KNOWLEDGE_EXTRACTION: &str = "knowledge.extraction";
    pub const INDICATOR_CONFIG: &str = "config.indicators";
    pub const AGGREGATION_CONFIG: &str = "config.aggregation";
    pub const SAMPLE_DATASET: &str = "dataset.sample";
    pub const SYNTHETIC_CODE: &str = "dataset.synthetic-code";
    pub const MODEL: &str = "model.estimator";
    pub const WRAPPER: &str = "model.wrapper";
    pub const REFINE_SYSTEM: &str = "refine.system";
    pub const REFINE_INITIAL: &str = "refine.initial";
    pub const REFINE_BETTERMENT: &str = "refine.betterment";
    pub const PLANNER_SYSTEM: &str = "planner.system";
    pub const PLANNER_DEMONSTRATION: &str = "planner.demonstration";
    pub const REACT_USER: &str = "execute.react";
    pub const CLAIMS_SYSTEM: &str = "claims.system";
    pub const CLAIMS_USER: &str = "claims.user";
    pub const PLAN_ENUMERATE: &str = "plan.enumerate";
    pub const PLAN_CHILD: &str = "plan.child";
    pub const PLAN_COLLECT: &str = "plan.collect";
    pub const PLAN_DETERIORATION: &str = "plan.deterioration";
    pub const PLAN_SPECIALIZE: &str = "plan.specialize";
    pub const PLAN_SPECIFIC: &str = "plan.specific";
    pub const PLAN_CODE: &str = "plan.code";
    pub const PLAN_SENSORS: &str = "plan.sensors";
    pub const PLAN_EXPORT: &str = "plan.export";
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryEntry {
    role: PromptRole,
    body: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryFile {
    version: u64,
    prompts: BTreeMap<String, RegistryEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    entries: BTreeMap<String, PromptTemplate>,
    version: u64,
}

impl PromptRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry preloaded with every prompt the pipeline uses.
    pub fn seeded() -> Self {
        use PromptRole::*;
        let seed = [
            (ids::DOMAIN_EXPERT_SYSTEM, System, prompts::DOMAIN_EXPERT_SYSTEM),
            (ids::DATA_SCIENTIST_SYSTEM, System, prompts::DATA_SCIENTIST_SYSTEM),
            (ids::SYSTEM_ARCHITECT_SYSTEM, System, ""),
            (ids::KNOWLEDGE_EXTRACTION, User, prompts::KNOWLEDGE_EXTRACTION),
            (ids::INDICATOR_CONFIG, User, prompts::INDICATOR_CONFIG),
            (ids::AGGREGATION_CONFIG, User, prompts::AGGREGATION_CONFIG),
            (ids::SAMPLE_DATASET, User, prompts::SAMPLE_DATASET),
            (ids::SYNTHETIC_CODE, User, prompts::SYNTHETIC_CODE),
            (ids::MODEL, User, prompts::MODEL),
            (ids::WRAPPER, User, prompts::WRAPPER),
            (ids::REFINE_SYSTEM, System, prompts::REFINE_SYSTEM),
            (ids::REFINE_INITIAL, User, prompts::REFINE_INITIAL),
            (ids::REFINE_BETTERMENT, User, prompts::REFINE_BETTERMENT),
            (ids::PLANNER_SYSTEM, System, prompts::PLANNER_SYSTEM),
            (ids::PLANNER_DEMONSTRATION, System, crate::fixtures::PLAN_DEMONSTRATION),
            (ids::REACT_USER, User, prompts::REACT_USER),
            (ids::CLAIMS_SYSTEM, System, prompts::CLAIMS_SYSTEM),
            (ids::CLAIMS_USER, User, prompts::CLAIMS_USER),
        ];
        let mut reg = Self::new();
        for (id, role, body) in seed {
            reg.register(PromptTemplate::new(id, role, body.trim_end()), false)
                .expect("seed ids are unique");
        }
        let steps: BTreeMap<String, String> =
            serde_yaml::from_str(prompts::PLAN_STEPS).expect("embedded step templates parse");
        for (id, body) in steps {
            reg.register(PromptTemplate::new(id, User, body), false)
                .expect("seed ids are unique");
        }
        reg
    }

    pub fn register(&mut self, tpl: PromptTemplate, overwrite: bool) -> Result<u64, PromptError> {
        if !overwrite && self.entries.contains_key(tpl.id()) {
            return Err(PromptError::DuplicateId(tpl.id().to_string()));
        }
        self.entries.insert(tpl.id().to_string(), tpl);
        self.version += 1;
        Ok(self.version)
    }

    pub fn get(&self, id: &str) -> Result<&PromptTemplate, PromptError> {
        self.entries.get(id).ok_or_else(|| PromptError::UnknownId(id.to_string()))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Resolves a role's system prompt, checking it exists and is a system template.
    pub fn system_prompt(&self, role: &RoleProfile) -> Result<&PromptTemplate, PromptError> {
        let tpl = self.get(&role.system_prompt_id)?;
        if tpl.role() != PromptRole::System {
            return Err(PromptError::NotSystemTemplate {
                profile: format!("{:?}", role.name),
                id: tpl.id().to_string(),
                role: tpl.role(),
            });
        }
        Ok(tpl)
    }

    pub fn render(&self, id: &str, bindings: &BTreeMap<String, String>) -> Result<String, PromptError> {
        Ok(self.get(id)?.instantiate(bindings)?.text)
    }

    pub fn to_yaml(&self) -> String {
        let file = RegistryFile {
            version: self.version,
            prompts: self
                .entries
                .iter()
                .map(|(id, t)| (id.clone(), RegistryEntry { role: t.role, body: t.body.clone() }))
                .collect(),
        };
        serde_yaml::to_string(&file).expect("registry always serializes")
    }

    pub fn from_yaml(text: &str) -> Result<Self, PromptError> {
        let file: RegistryFile = serde_yaml::from_str(text).map_err(|e| PromptError::Format(e.to_string()))?;
        let entries = file
            .prompts
            .into_iter()
            .map(|(id, e)| (id.clone(), PromptTemplate::new(id, e.role, e.body)))
            .collect();
        Ok(Self { entries, version: file.version })
    }
}
