//! Recipe artifacts and their on-disk bundle.
//!
//! A recipe bundles, for one (asset class, KPI) pair, the knowledge document,
//! the sensor health-indicator ranges, the aggregation config, a sample
//! dataset, a scoring-model descriptor and the wrapper manifest tying them
//! together.
//!
//! Bundle layout:
//!
//! | file                     | content                          |
//! |--------------------------|----------------------------------|
//! | `knowledge.md`           | knowledge document with references |
//! | `health_indicators.yaml` | [`HealthIndicatorConfig`]        |
//! | `aggregation.yaml`       | [`AggregationConfig`]            |
//! | `sample_dataset.csv`     | [`SampleDataset`]                |
//! | `wrapper.yaml`           | [`WrapperManifest`]              |
//! | `recipe.yaml`            | [`RecipeIndex`] with sha256 per artifact |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::health_scoring::AggregationConfig;

pub const KNOWLEDGE_FILE: &str = "knowledge.md";
pub const INDICATORS_FILE: &str = "health_indicators.yaml";
pub const AGGREGATION_FILE: &str = "aggregation.yaml";
pub const DATASET_FILE: &str = "sample_dataset.csv";
pub const WRAPPER_FILE: &str = "wrapper.yaml";
pub const INDEX_FILE: &str = "recipe.yaml";
/// Where the wrapper writes scores when run.
pub const SCORES_FILE: &str = "scores.csv";

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("invalid health indicator config: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("number of assets must be at least 1")]
    NoAssets,
    #[error("recipe failed validation:\n{0}")]
    ValidationFailed(ValidationReport),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: content hash does not match the recipe index")]
    HashMismatch { path: String },
    #[error("no artifact stored for {0}")]
    NotFound(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RecipeError + '_ {
    move |source| RecipeError::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &str) -> impl FnOnce(String) -> RecipeError + '_ {
    move |message| RecipeError::Parse { path: path.to_string(), message }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Poor,
    Medium,
    Good,
    Excellent,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Poor, Category::Medium, Category::Good, Category::Excellent];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Poor => "poor",
            Category::Medium => "medium",
            Category::Good => "good",
            Category::Excellent => "excellent",
        }
    }

    pub fn rank(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `[min, max)`; the range at the top of the domain also includes `max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRange {
    pub category: Category,
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorIndicator {
    pub name: String,
    pub unit: String,
    pub ranges: Vec<CategoryRange>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("value {value} is outside the domain [{min}, {max}] of sensor '{sensor}'")]
pub struct OutOfDomain {
    pub sensor: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

impl SensorIndicator {
    /// Ranges sorted by lower bound.
    pub fn sorted_ranges(&self) -> Vec<&CategoryRange> {
        let mut r: Vec<&CategoryRange> = self.ranges.iter().collect();
        r.sort_by(|a, b| a.min.total_cmp(&b.min));
        r
    }

    /// `(min, max)` over all ranges.
    pub fn domain(&self) -> (f64, f64) {
        let min = self.ranges.iter().map(|r| r.min).fold(f64::INFINITY, f64::min);
        let max = self.ranges.iter().map(|r| r.max).fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    pub fn categorize(&self, value: f64) -> Result<Category, OutOfDomain> {
        let ranges = self.sorted_ranges();
        let (min, max) = self.domain();
        let out = || OutOfDomain { sensor: self.name.clone(), value, min, max };
        if !value.is_finite() {
            return Err(out());
        }
        let last = ranges.len().saturating_sub(1);
        ranges
            .iter()
            .enumerate()
            .find(|(i, r)| r.min <= value && (value < r.max || (*i == last && value == r.max)))
            .map(|(_, r)| r.category)
            .ok_or_else(out)
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let name = &self.name;
        if name.trim().is_empty() {
            v.push("sensor with blank name".to_string());
        }
        if self.unit.trim().is_empty() {
            v.push(format!("sensor '{name}': missing unit"));
        }
        let cats: BTreeSet<Category> = self.ranges.iter().map(|r| r.category).collect();
        if self.ranges.len() != 4 || cats.len() != 4 {
            v.push(format!("sensor '{name}': needs exactly one range for each of poor, medium, good, excellent"));
        }
        for r in &self.ranges {
            if !(r.min.is_finite() && r.max.is_finite()) || r.min >= r.max {
                v.push(format!("sensor '{name}': range {} has min {} not below max {}", r.category, r.min, r.max));
            }
            if let Some(u) = &r.unit {
                if u != &self.unit {
                    v.push(format!("sensor '{name}': range {} unit '{u}' differs from '{}'", r.category, self.unit));
                }
            }
        }
        let sorted = self.sorted_ranges();
        for pair in sorted.windows(2) {
            if pair[0].max != pair[1].min {
                v.push(format!(
                    "sensor '{name}': ranges {} and {} are not contiguous ({} vs {})",
                    pair[0].category, pair[1].category, pair[0].max, pair[1].min
                ));
            }
        }
        let ranks: Vec<usize> = sorted.iter().map(|r| r.category.rank()).collect();
        let ascending = ranks.windows(2).all(|w| w[0] < w[1]);
        let descending = ranks.windows(2).all(|w| w[0] > w[1]);
        if cats.len() == 4 && !(ascending || descending) {
            v.push(format!("sensor '{name}': categories are not ordered along the value axis"));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthIndicatorConfig {
    pub sensors: Vec<SensorIndicator>,
}

impl HealthIndicatorConfig {
    pub fn sensor(&self, name: &str) -> Option<&SensorIndicator> {
        self.sensors.iter().find(|s| s.name == name)
    }

    pub fn sensor_names(&self) -> BTreeSet<&str> {
        self.sensors.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.sensors.is_empty() {
            v.push("health indicator config lists no sensors".to_string());
        }
        let mut seen = BTreeSet::new();
        for s in &self.sensors {
            if !seen.insert(s.name.as_str()) {
                v.push(format!("sensor '{}' is listed twice", s.name));
            }
            v.extend(s.violations());
        }
        v
    }

    pub fn validate(&self) -> Result<(), RecipeError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(RecipeError::InvalidConfig(v))
        }
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn from_yaml(text: &str) -> Result<Self, RecipeError> {
        serde_yaml::from_str(text).map_err(|e| parse_err(INDICATORS_FILE)(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub asset_id: String,
    pub sensor_name: String,
    pub value: f64,
    pub timestamp: DateTime<Utc>,
    pub unit: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleDataset {
    pub rows: Vec<Reading>,
}

impl SampleDataset {
    pub fn asset_ids(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.asset_id.as_str()).collect()
    }

    /// Latest reading per (asset, sensor); later rows win ties.
    pub fn latest(&self) -> BTreeMap<&str, BTreeMap<&str, &Reading>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, &Reading>> = BTreeMap::new();
        for r in &self.rows {
            let slot = out.entry(&r.asset_id).or_default().entry(&r.sensor_name).or_insert(r);
            if r.timestamp >= slot.timestamp {
                *slot = r;
            }
        }
        out
    }

    /// Problems with this dataset relative to `cfg`.
    pub fn violations(&self, cfg: &HealthIndicatorConfig) -> Vec<String> {
        let mut v = Vec::new();
        if self.rows.is_empty() {
            v.push("dataset is empty".to_string());
        }
        let mut unknown = BTreeSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            match cfg.sensor(&r.sensor_name) {
                None => {
                    unknown.insert(r.sensor_name.as_str());
                }
                Some(s) => {
                    if r.unit != s.unit {
                        v.push(format!("row {}: unit '{}' for sensor '{}' should be '{}'", i + 1, r.unit, s.name, s.unit));
                    }
                    if let Err(e) = s.categorize(r.value) {
                        v.push(format!("row {}: {e}", i + 1));
                    }
                }
            }
        }
        v.extend(unknown.into_iter().map(|s| format!("unknown sensor: {s}")));
        let names = cfg.sensor_names();
        for (asset, sensors) in self.latest() {
            let missing: Vec<&str> = names.iter().filter(|n| !sensors.contains_key(*n)).copied().collect();
            if !missing.is_empty() {
                v.push(format!("asset '{asset}' has no reading for {}", missing.join(", ")));
            }
        }
        v
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("readings serialize");
        }
        if self.rows.is_empty() {
            w.write_record(["asset_id", "sensor_name", "value", "timestamp", "unit"]).unwrap();
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).unwrap()
    }

    pub fn from_csv(text: &str) -> Result<Self, RecipeError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows = rdr
            .deserialize()
            .collect::<Result<Vec<Reading>, _>>()
            .map_err(|e| parse_err(DATASET_FILE)(e.to_string()))?;
        Ok(Self { rows })
    }
}

/// Fixed timestamp for generated data so bundles are reproducible.
pub fn synthetic_epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

/// One reading per sensor for each of `n_assets` assets, drawn uniformly over
/// each sensor's domain.
pub fn generate_synthetic(cfg: &HealthIndicatorConfig, n_assets: usize, seed: u64) -> Result<SampleDataset, RecipeError> {
    if n_assets == 0 {
        return Err(RecipeError::NoAssets);
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_assets.to_string().len().max(3);
    let mut rows = Vec::with_capacity(n_assets * cfg.sensors.len());
    for a in 0..n_assets {
        let asset_id = format!("asset-{:0width$}", a + 1);
        let timestamp = synthetic_epoch() + Duration::minutes(a as i64);
        for s in &cfg.sensors {
            let (min, max) = s.domain();
            rows.push(Reading {
                asset_id: asset_id.clone(),
                sensor_name: s.name.clone(),
                value: rng.gen_range(min..=max),
                timestamp,
                unit: s.unit.clone(),
            });
        }
    }
    Ok(SampleDataset { rows })
}

/// Identifies the scoring model the wrapper runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub name: String,
    pub method: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub created_at: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

/// How to run the recipe: which files feed the model and where scores go.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperManifest {
    pub knowledge_doc: String,
    pub indicator_config: String,
    pub aggregation_config: String,
    pub dataset: String,
    pub model: ModelDescriptor,
    pub output: String,
    pub run: RunMetadata,
}

impl WrapperManifest {
    /// A manifest pointing at the standard bundle file names.
    pub fn standard(model: ModelDescriptor, run: RunMetadata) -> Self {
        Self {
            knowledge_doc: KNOWLEDGE_FILE.into(),
            indicator_config: INDICATORS_FILE.into(),
            aggregation_config: AGGREGATION_FILE.into(),
            dataset: DATASET_FILE.into(),
            model,
            output: SCORES_FILE.into(),
            run,
        }
    }

    fn input_paths(&self) -> [&str; 4] {
        [&self.knowledge_doc, &self.indicator_config, &self.aggregation_config, &self.dataset]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub kpi: String,
    pub asset_class: String,
    pub knowledge_doc: Option<String>,
    pub indicator_config: Option<HealthIndicatorConfig>,
    pub aggregation_config: Option<AggregationConfig>,
    pub sample_dataset: Option<SampleDataset>,
    pub model_ref: Option<ModelDescriptor>,
    pub wrapper: Option<WrapperManifest>,
}

impl Recipe {
    pub fn new(kpi: impl Into<String>, asset_class: impl Into<String>) -> Self {
        Self {
            kpi: kpi.into(),
            asset_class: asset_class.into(),
            knowledge_doc: None,
            indicator_config: None,
            aggregation_config: None,
            sample_dataset: None,
            model_ref: None,
            wrapper: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Every problem that would stop the recipe from being bundled.
pub fn validate_recipe(r: &Recipe) -> ValidationReport {
    let mut v = Vec::new();
    if r.kpi.trim().is_empty() {
        v.push("kpi is blank".to_string());
    }
    if r.asset_class.trim().is_empty() {
        v.push("asset class is blank".to_string());
    }
    let missing = |slot: &str| format!("artifact missing: {slot}");
    match &r.knowledge_doc {
        None => v.push(missing("knowledge_doc")),
        Some(doc) if doc.trim().is_empty() => v.push("knowledge document is empty".to_string()),
        _ => {}
    }
    match &r.indicator_config {
        None => v.push(missing("indicator_config")),
        Some(c) => v.extend(c.violations()),
    }
    match &r.aggregation_config {
        None => v.push(missing("aggregation_config")),
        Some(a) => v.extend(a.violations(r.indicator_config.as_ref())),
    }
    match (&r.sample_dataset, &r.indicator_config) {
        (None, _) => v.push(missing("sample_dataset")),
        (Some(d), Some(c)) => v.extend(d.violations(c)),
        (Some(_), None) => {}
    }
    if r.model_ref.is_none() {
        v.push(missing("model"));
    }
    match &r.wrapper {
        None => v.push(missing("wrapper")),
        Some(w) => {
            let standard = [KNOWLEDGE_FILE, INDICATORS_FILE, AGGREGATION_FILE, DATASET_FILE];
            for (path, expected) in w.input_paths().iter().zip(standard) {
                if *path != expected {
                    v.push(format!("wrapper references '{path}', which the bundle does not contain (expected '{expected}')"));
                }
            }
            if r.model_ref.as_ref().is_some_and(|m| m != &w.model) {
                v.push("wrapper model differs from the recipe's model".to_string());
            }
        }
    }
    ValidationReport { violations: v }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub sha256: String,
}

/// Top-level `recipe.yaml`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeIndex {
    pub kpi: String,
    pub asset_class: String,
    pub model: ModelDescriptor,
    pub artifacts: BTreeMap<String, IndexEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the six bundle files into `out_dir`.
pub fn bundle(r: &Recipe, out_dir: &Path) -> Result<RecipeIndex, RecipeError> {
    let report = validate_recipe(r);
    if !report.is_empty() {
        return Err(RecipeError::ValidationFailed(report));
    }
    let (Some(doc), Some(ind), Some(agg), Some(data), Some(model), Some(wrapper)) = (
        &r.knowledge_doc,
        &r.indicator_config,
        &r.aggregation_config,
        &r.sample_dataset,
        &r.model_ref,
        &r.wrapper,
    ) else {
        unreachable!("validated recipes have every slot")
    };
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = [
        ("knowledge_doc", KNOWLEDGE_FILE, doc.clone()),
        ("indicator_config", INDICATORS_FILE, ind.to_yaml()),
        ("aggregation_config", AGGREGATION_FILE, agg.to_yaml()),
        ("sample_dataset", DATASET_FILE, data.to_csv()),
        ("wrapper", WRAPPER_FILE, serde_yaml::to_string(wrapper).expect("manifest serializes")),
    ];
    let mut artifacts = BTreeMap::new();
    for (kind, name, content) in files {
        let path = out_dir.join(name);
        fs::write(&path, &content).map_err(io_err(&path))?;
        artifacts.insert(kind.to_string(), IndexEntry { path: name.to_string(), sha256: sha256_hex(content.as_bytes()) });
    }
    let index = RecipeIndex {
        kpi: r.kpi.clone(),
        asset_class: r.asset_class.clone(),
        model: model.clone(),
        artifacts,
    };
    let path = out_dir.join(INDEX_FILE);
    fs::write(&path, serde_yaml::to_string(&index).expect("index serializes")).map_err(io_err(&path))?;
    Ok(index)
}

/// Reads a bundle back, checking every content hash.
pub fn load_bundle(dir: &Path) -> Result<Recipe, RecipeError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(io_err(&path))
    };
    let index: RecipeIndex = serde_yaml::from_str(&read(INDEX_FILE)?).map_err(|e| parse_err(INDEX_FILE)(e.to_string()))?;
    let mut texts = BTreeMap::new();
    for (kind, entry) in &index.artifacts {
        let text = read(&entry.path)?;
        if sha256_hex(text.as_bytes()) != entry.sha256 {
            return Err(RecipeError::HashMismatch { path: entry.path.clone() });
        }
        texts.insert(kind.as_str(), text);
    }
    let take = |kind: &str| texts.get(kind).cloned();
    let mut recipe = Recipe::new(index.kpi.clone(), index.asset_class.clone());
    recipe.knowledge_doc = take("knowledge_doc");
    recipe.indicator_config = take("indicator_config").map(|t| HealthIndicatorConfig::from_yaml(&t)).transpose()?;
    recipe.aggregation_config = take("aggregation_config")
        .map(|t| AggregationConfig::from_yaml(&t).map_err(|e| parse_err(AGGREGATION_FILE)(e.to_string())))
        .transpose()?;
    recipe.sample_dataset = take("sample_dataset").map(|t| SampleDataset::from_csv(&t)).transpose()?;
    recipe.wrapper = take("wrapper")
        .map(|t| serde_yaml::from_str(&t).map_err(|e| parse_err(WRAPPER_FILE)(e.to_string())))
        .transpose()?;
    recipe.model_ref = Some(index.model);
    Ok(recipe)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    KnowledgeDoc,
    IndicatorConfig,
    AggregationConfig,
    SampleDataset,
    Model,
    Wrapper,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArtifactKey {
    pub asset_class: String,
    pub kpi: String,
    pub kind: ArtifactKind,
}

impl ArtifactKey {
    pub fn new(asset_class: &str, kpi: &str, kind: ArtifactKind) -> Self {
        Self { asset_class: asset_class.trim().to_lowercase(), kpi: kpi.trim().to_lowercase(), kind }
    }
}

impl fmt::Display for ArtifactKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{:?}", self.asset_class, self.kpi, self.kind)
    }
}

/// Versioned artifact library. Versions start at 1 per key.
#[derive(Debug, Default)]
pub struct KnowledgeBase {
    entries: RwLock<BTreeMap<ArtifactKey, Vec<Arc<[u8]>>>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&self, key: ArtifactKey, artifact: &[u8]) -> u64 {
        let mut map = self.entries.write().expect("knowledge base lock");
        let versions = map.entry(key).or_default();
        versions.push(Arc::from(artifact));
        versions.len() as u64
    }

    /// The latest version, or `version` when given.
    pub fn get(&self, key: &ArtifactKey, version: Option<u64>) -> Result<Arc<[u8]>, RecipeError> {
        let map = self.entries.read().expect("knowledge base lock");
        let versions = map.get(key).ok_or_else(|| RecipeError::NotFound(key.to_string()))?;
        let idx = match version {
            None => versions.len() - 1,
            Some(v) => (v as usize)
                .checked_sub(1)
                .filter(|&i| i < versions.len())
                .ok_or_else(|| RecipeError::NotFound(format!("{key} version {v}")))?,
        };
        Ok(versions[idx].clone())
    }

    pub fn latest_version(&self, key: &ArtifactKey) -> Option<u64> {
        self.entries.read().expect("knowledge base lock").get(key).map(|v| v.len() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor(name: &str, unit: &str, bounds: [f64; 5], ascending: bool) -> SensorIndicator {
        let mut cats = Category::ALL.to_vec();
        if !ascending {
            cats.reverse();
        }
        SensorIndicator {
            name: name.into(),
            unit: unit.into(),
            ranges: cats
                .into_iter()
                .enumerate()
                .map(|(i, category)| CategoryRange { category, min: bounds[i], max: bounds[i + 1], unit: None })
                .collect(),
        }
    }

    #[test]
    fn half_open_categorization() {
        let s = sensor("temp", "degC", [0.0, 10.0, 20.0, 30.0, 40.0], true);
        assert_eq!(s.categorize(20.0), Ok(Category::Good));
        assert_eq!(s.categorize(19.999), Ok(Category::Medium));
        assert_eq!(s.categorize(35.0), Ok(Category::Excellent));
        assert_eq!(s.categorize(40.0), Ok(Category::Excellent));
        assert!(s.categorize(-0.1).is_err());
        assert!(s.categorize(40.1).is_err());
        let d = sensor("vib", "mm/s", [0.0, 2.0, 4.0, 8.0, 16.0], false);
        assert_eq!(d.categorize(1.0), Ok(Category::Excellent));
        assert_eq!(d.categorize(16.0), Ok(Category::Poor));
    }

    #[test]
    fn config_violations() {
        let mut s = sensor("temp", "degC", [0.0, 10.0, 20.0, 30.0, 40.0], true);
        assert!(s.violations().is_empty());
        s.ranges[1].max = 12.0;
        assert!(s.violations().iter().any(|v| v.contains("not contiguous")));
        let mut s = sensor("temp", "degC", [0.0, 10.0, 20.0, 30.0, 40.0], true);
        s.ranges.swap(0, 1);
        s.ranges[0].min = 0.0;
        s.ranges[0].max = 10.0;
        s.ranges[1].min = 10.0;
        s.ranges[1].max = 20.0;
        assert!(s.violations().iter().any(|v| v.contains("not ordered")));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let cfg = HealthIndicatorConfig {
            sensors: vec![
                sensor("a", "u", [0.0, 1.0, 2.0, 3.0, 4.0], true),
                sensor("b", "u", [0.0, 1.0, 2.0, 3.0, 4.0], false),
                sensor("c", "u", [5.0, 6.0, 7.0, 8.0, 9.0], true),
            ],
        };
        let d = generate_synthetic(&cfg, 5, 7).unwrap();
        assert_eq!(d.rows.len(), 15);
        assert_eq!(d.asset_ids().len(), 5);
        assert_eq!(d, generate_synthetic(&cfg, 5, 7).unwrap());
        assert!(d.violations(&cfg).is_empty());
        assert!(matches!(generate_synthetic(&cfg, 0, 7), Err(RecipeError::NoAssets)));
        let back = SampleDataset::from_csv(&d.to_csv()).unwrap();
        assert_eq!(back, d);
        assert!(d.to_csv().starts_with("asset_id,sensor_name,value,timestamp,unit\n"));
    }

    #[test]
    fn unknown_sensor_reported() {
        let cfg = HealthIndicatorConfig { sensors: vec![sensor("a", "u", [0.0, 1.0, 2.0, 3.0, 4.0], true)] };
        let mut d = generate_synthetic(&cfg, 1, 1).unwrap();
        d.rows[0].sensor_name = "z".into();
        let v = d.violations(&cfg);
        assert!(v.iter().any(|m| m == "unknown sensor: z"));
        assert!(v.iter().any(|m| m.contains("no reading for a")));
    }

    #[test]
    fn knowledge_base_versions() {
        let kb = KnowledgeBase::new();
        let key = ArtifactKey::new("Furnace", "asset health", ArtifactKind::KnowledgeDoc);
        assert!(matches!(kb.get(&key, None), Err(RecipeError::NotFound(_))));
        assert_eq!(kb.put(key.clone(), b"one"), 1);
        assert_eq!(kb.put(key.clone(), b"two"), 2);
        assert_eq!(&*kb.get(&key, None).unwrap(), b"two");
        assert_eq!(&*kb.get(&key, Some(1)).unwrap(), b"one");
        assert!(kb.get(&key, Some(3)).is_err());
    }
}
