//! Health scores from sensor readings: categorize each reading, map the
//! category to a sub-score and aggregate with fixed or AHP-derived weights
//! onto a 0 to 100 scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recipe_store::{Category, HealthIndicatorConfig, OutOfDomain, SampleDataset, SensorIndicator};

/// Largest pairwise matrix [`ahp_weights`] accepts.
pub const AHP_MAX_N: usize = 15;
const RECIPROCAL_TOL: f64 = 1e-9;

/// Saaty's random consistency index for n = 1..=10.
const RANDOM_INDEX: [f64; 10] = [0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49];

#[derive(Debug, Error, PartialEq)]
pub enum AhpError {
    #[error("pairwise matrix is empty")]
    Empty,
    #[error("pairwise matrix is not square")]
    NotSquare,
    #[error("pairwise matrix of size {0} exceeds the limit")]
    TooLarge(usize),
    #[error("entry ({0}, {1}) is not a positive finite number")]
    NonPositiveEntry(usize, usize),
    #[error("diagonal entry {0} is not 1")]
    DiagonalNotOne(usize),
    #[error("entries ({0}, {1}) and ({1}, {0}) are not reciprocal")]
    NotReciprocal(usize, usize),
    #[error("no random index is tabulated for n = {0}")]
    NOutOfTable(usize),
}

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("no reading for sensor '{0}'")]
    MissingSensor(String),
    #[error(transparent)]
    OutOfDomain(#[from] OutOfDomain),
    #[error(transparent)]
    Ahp(#[from] AhpError),
    #[error("predict called before fit")]
    NotFitted,
    #[error("validation failed: {}", .0.join("; "))]
    ValidationFailed(Vec<String>),
    #[error("aggregation config: {0}")]
    Format(String),
}

/// Category to sub-score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub poor: f64,
    pub medium: f64,
    pub good: f64,
    pub excellent: f64,
}

impl Default for CategoryScores {
    fn default() -> Self {
        Self { poor: 0.25, medium: 0.5, good: 0.75, excellent: 1.0 }
    }
}

impl CategoryScores {
    pub fn get(&self, c: Category) -> f64 {
        match c {
            Category::Poor => self.poor,
            Category::Medium => self.medium,
            Category::Good => self.good,
            Category::Excellent => self.excellent,
        }
    }

    fn violations(&self) -> Vec<String> {
        let s = [self.poor, self.medium, self.good, self.excellent];
        let mut v = Vec::new();
        if s.iter().any(|x| !(0.0..=1.0).contains(x)) {
            v.push("category scores must lie in [0, 1]".to_string());
        }
        if !s.windows(2).all(|w| w[0] < w[1]) {
            v.push("category scores must increase from poor to excellent".to_string());
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AggregationMethod {
    Weighted { weights: BTreeMap<String, f64> },
    Ahp { criteria: Vec<String>, pairwise: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    #[serde(default)]
    pub category_scores: CategoryScores,
    pub method: AggregationMethod,
}

impl AggregationConfig {
    pub fn weighted(weights: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            category_scores: CategoryScores::default(),
            method: AggregationMethod::Weighted { weights: weights.into_iter().collect() },
        }
    }

    pub fn ahp(criteria: Vec<String>, pairwise: Vec<Vec<f64>>) -> Self {
        Self { category_scores: CategoryScores::default(), method: AggregationMethod::Ahp { criteria, pairwise } }
    }

    pub fn method_name(&self) -> &'static str {
        match self.method {
            AggregationMethod::Weighted { .. } => "weighted",
            AggregationMethod::Ahp { .. } => "ahp",
        }
    }

    /// Sensor weights summing to 1.
    pub fn resolved_weights(&self) -> Result<BTreeMap<String, f64>, ScoringError> {
        match &self.method {
            AggregationMethod::Weighted { weights } => {
                let total: f64 = weights.values().sum();
                Ok(weights.iter().map(|(k, w)| (k.clone(), w / total)).collect())
            }
            AggregationMethod::Ahp { criteria, pairwise } => {
                let w = ahp_weights(pairwise)?;
                Ok(criteria.iter().cloned().zip(w).collect())
            }
        }
    }

    /// Problems with this config, checked against the indicator config when
    /// one is given.
    pub fn violations(&self, indicators: Option<&HealthIndicatorConfig>) -> Vec<String> {
        let mut v = self.category_scores.violations();
        let names: Vec<&String> = match &self.method {
            AggregationMethod::Weighted { weights } => {
                if weights.is_empty() {
                    v.push("weighted aggregation has no weights".to_string());
                }
                if weights.values().any(|w| !w.is_finite() || *w < 0.0) {
                    v.push("weights must be finite and non-negative".to_string());
                }
                let total: f64 = weights.values().sum();
                if (total - 1.0).abs() > 1e-9 {
                    v.push(format!("weights sum to {total}, not 1"));
                }
                weights.keys().collect()
            }
            AggregationMethod::Ahp { criteria, pairwise } => {
                if criteria.len() != pairwise.len() {
                    v.push(format!("{} AHP criteria but a {}-row pairwise matrix", criteria.len(), pairwise.len()));
                }
                if let Err(e) = check_pairwise(pairwise) {
                    v.push(format!("AHP matrix: {e}"));
                }
                criteria.iter().collect()
            }
        };
        if let Some(ind) = indicators {
            for n in names {
                if ind.sensor(n).is_none() {
                    v.push(format!("aggregation weight for unknown sensor: {n}"));
                }
            }
        }
        v
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn from_yaml(text: &str) -> Result<Self, ScoringError> {
        serde_yaml::from_str(text).map_err(|e| ScoringError::Format(e.to_string()))
    }
}

fn check_pairwise(m: &[Vec<f64>]) -> Result<usize, AhpError> {
    let n = m.len();
    if n == 0 {
        return Err(AhpError::Empty);
    }
    if m.iter().any(|row| row.len() != n) {
        return Err(AhpError::NotSquare);
    }
    for i in 0..n {
        for j in 0..n {
            if !(m[i][j].is_finite() && m[i][j] > 0.0) {
                return Err(AhpError::NonPositiveEntry(i, j));
            }
        }
    }
    for i in 0..n {
        if (m[i][i] - 1.0).abs() > RECIPROCAL_TOL {
            return Err(AhpError::DiagonalNotOne(i));
        }
        for j in i + 1..n {
            if (m[j][i] - 1.0 / m[i][j]).abs() > RECIPROCAL_TOL {
                return Err(AhpError::NotReciprocal(i, j));
            }
        }
    }
    Ok(n)
}

/// Priority vector from a reciprocal pairwise matrix: normalized row
/// geometric means.
pub fn ahp_weights(pairwise: &[Vec<f64>]) -> Result<Vec<f64>, AhpError> {
    let n = check_pairwise(pairwise)?;
    if n > AHP_MAX_N {
        return Err(AhpError::TooLarge(n));
    }
    // Mean of logs keeps wide-ranging ratios from overflowing.
    let gm: Vec<f64> = pairwise
        .iter()
        .map(|row| (row.iter().map(|x| x.ln()).sum::<f64>() / n as f64).exp())
        .collect();
    let total: f64 = gm.iter().sum();
    Ok(gm.into_iter().map(|g| g / total).collect())
}

/// Principal eigenvalue by power iteration.
fn lambda_max(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut v = vec![1.0 / n as f64; n];
    let mut lambda = n as f64;
    for _ in 0..100_000 {
        let w: Vec<f64> = m.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        lambda = w.iter().sum::<f64>();
        let next: Vec<f64> = w.iter().map(|x| x / lambda).collect();
        let residual = m
            .iter()
            .zip(&next)
            .map(|(row, &vi)| (row.iter().zip(&next).map(|(a, b)| a * b).sum::<f64>() - lambda * vi).abs())
            .fold(0.0, f64::max);
        v = next;
        if residual < 1e-10 {
            break;
        }
    }
    lambda
}

/// Saaty consistency ratio; 0 for matrices of size 1 or 2.
pub fn consistency_ratio(pairwise: &[Vec<f64>]) -> Result<f64, AhpError> {
    let n = check_pairwise(pairwise)?;
    if n > RANDOM_INDEX.len() {
        return Err(AhpError::NOutOfTable(n));
    }
    if n <= 2 {
        return Ok(0.0);
    }
    let ci = (lambda_max(pairwise) - n as f64) / (n as f64 - 1.0);
    Ok((ci / RANDOM_INDEX[n - 1]).max(0.0))
}

pub fn categorize(value: f64, sensor: &SensorIndicator) -> Result<Category, OutOfDomain> {
    sensor.categorize(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorContribution {
    pub sensor: String,
    pub category: Category,
    pub sub_score: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthScore {
    pub asset_id: String,
    pub score: f64,
    pub method: String,
    pub breakdown: Vec<SensorContribution>,
}

/// `100 * sum(w_i * s_i)` over the configured sensors. Sensors without a
/// weight are ignored; a weighted sensor without a category is an error.
pub fn weighted_score(
    asset_id: &str,
    categories: &BTreeMap<String, Category>,
    cfg: &AggregationConfig,
) -> Result<HealthScore, ScoringError> {
    let weights = cfg.resolved_weights()?;
    let mut breakdown = Vec::with_capacity(weights.len());
    for (sensor, &weight) in &weights {
        let category = *categories.get(sensor).ok_or_else(|| ScoringError::MissingSensor(sensor.clone()))?;
        breakdown.push(SensorContribution {
            sensor: sensor.clone(),
            category,
            sub_score: cfg.category_scores.get(category),
            weight,
        });
    }
    let raw: f64 = breakdown.iter().map(|c| c.weight * c.sub_score).sum();
    Ok(HealthScore {
        asset_id: asset_id.to_string(),
        score: (100.0 * raw).clamp(0.0, 100.0),
        method: cfg.method_name().to_string(),
        breakdown,
    })
}

/// Fit-then-predict scorer over a dataset.
#[derive(Debug, Clone, Default)]
pub struct HealthEstimator {
    fitted: Option<(HealthIndicatorConfig, AggregationConfig)>,
}

impl HealthEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fit(&mut self, indicators: &HealthIndicatorConfig, aggregation: &AggregationConfig) -> Result<(), ScoringError> {
        let mut v = indicators.violations();
        v.extend(aggregation.violations(Some(indicators)));
        if !v.is_empty() {
            return Err(ScoringError::ValidationFailed(v));
        }
        self.fitted = Some((indicators.clone(), aggregation.clone()));
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted.is_some()
    }

    /// One score per asset, from its latest reading of each sensor.
    pub fn predict(&self, dataset: &SampleDataset) -> Result<Vec<HealthScore>, ScoringError> {
        let (ind, agg) = self.fitted.as_ref().ok_or(ScoringError::NotFitted)?;
        let v = dataset.violations(ind);
        if !v.is_empty() {
            return Err(ScoringError::ValidationFailed(v));
        }
        dataset
            .latest()
            .into_iter()
            .map(|(asset, readings)| {
                let categories = readings
                    .into_iter()
                    .map(|(name, r)| {
                        let sensor = ind.sensor(name).expect("validated sensor");
                        Ok((name.to_string(), sensor.categorize(r.value)?))
                    })
                    .collect::<Result<BTreeMap<_, _>, ScoringError>>()?;
                weighted_score(asset, &categories, agg)
            })
            .collect()
    }
}

/// `asset_id,score,method` rows.
pub fn scores_csv(scores: &[HealthScore]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["asset_id", "score", "method"]).unwrap();
    for s in scores {
        w.write_record([s.asset_id.as_str(), &format!("{:.6}", s.score), s.method.as_str()]).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}
