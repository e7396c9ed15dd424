//! Lexical document metrics: root type-token ratio, vocabulary coverage and
//! cosine similarity (term-frequency vectors, or embeddings when available).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("text has no tokens")]
    EmptyText,
}

#[derive(Debug, Error)]
#[error("embedding failed: {0}")]
pub struct EmbedderError(pub String);

/// Optional semantic backend for [`similarity`].
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenProfile {
    pub tokens: Vec<String>,
    pub counts: BTreeMap<String, usize>,
}

impl TokenProfile {
    pub fn total_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn unique_count(&self) -> usize {
        self.counts.len()
    }

    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.counts.keys().map(String::as_str).collect()
    }
}

/// Case-folded tokens split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> TokenProfile {
    let tokens: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut counts = BTreeMap::new();
    for t in &tokens {
        *counts.entry(t.clone()).or_insert(0) += 1;
    }
    TokenProfile { tokens, counts }
}

/// Number of tokens, the unit used for answer lengths.
pub fn token_count(text: &str) -> usize {
    tokenize(text).total_count()
}

/// Unique types over the square root of total tokens.
pub fn ttr(text: &str) -> Result<f64, MetricsError> {
    let p = tokenize(text);
    if p.total_count() == 0 {
        return Err(MetricsError::EmptyText);
    }
    Ok(p.unique_count() as f64 / (p.total_count() as f64).sqrt())
}

/// Percentage of `base`'s vocabulary that also occurs in `other`.
pub fn coverage(base: &str, other: &str) -> Result<f64, MetricsError> {
    let b = tokenize(base);
    if b.unique_count() == 0 {
        return Err(MetricsError::EmptyText);
    }
    let o = tokenize(other);
    let shared = b.counts.keys().filter(|t| o.counts.contains_key(*t)).count();
    Ok(100.0 * shared as f64 / b.unique_count() as f64)
}

/// Count-weighted variant of [`coverage`]: the share of `base`'s token mass
/// matched by `other`, with each type capped at its count in `other`.
pub fn coverage_weighted(base: &str, other: &str) -> Result<f64, MetricsError> {
    let b = tokenize(base);
    if b.total_count() == 0 {
        return Err(MetricsError::EmptyText);
    }
    let o = tokenize(other);
    let matched: usize = b
        .counts
        .iter()
        .map(|(t, &c)| c.min(o.counts.get(t).copied().unwrap_or(0)))
        .sum();
    Ok(100.0 * matched as f64 / b.total_count() as f64)
}

/// Cosine similarity of term-frequency vectors. Exact integer dot products
/// keep the result bit-for-bit symmetric.
pub fn lexical_similarity(a: &str, b: &str) -> Result<f64, MetricsError> {
    let pa = tokenize(a);
    let pb = tokenize(b);
    if pa.total_count() == 0 || pb.total_count() == 0 {
        return Err(MetricsError::EmptyText);
    }
    let dot: u128 = pa
        .counts
        .iter()
        .filter_map(|(t, &ca)| pb.counts.get(t).map(|&cb| (ca * cb) as u128))
        .sum();
    let norm = |p: &TokenProfile| p.counts.values().map(|&c| (c * c) as u128).sum::<u128>();
    let denom = ((norm(&pa) * norm(&pb)) as f64).sqrt();
    Ok(dot as f64 / denom)
}

fn cosine(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.is_empty() {
        return None;
    }
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>();
    let ny: f64 = y.iter().map(|b| b * b).sum::<f64>();
    let denom = (nx * ny).sqrt();
    (denom > 0.0).then(|| (dot / denom).clamp(-1.0, 1.0))
}

/// Embedding cosine when an embedder is configured and works, otherwise the
/// lexical fallback.
pub fn similarity(a: &str, b: &str, embedder: Option<&dyn Embedder>) -> Result<f64, MetricsError> {
    if tokenize(a).total_count() == 0 || tokenize(b).total_count() == 0 {
        return Err(MetricsError::EmptyText);
    }
    if let Some(e) = embedder {
        match (e.embed(a), e.embed(b)) {
            (Ok(x), Ok(y)) => match cosine(&x, &y) {
                Some(s) => return Ok(s),
                None => log::warn!("embedding vectors unusable, falling back to lexical similarity"),
            },
            (Err(err), _) | (_, Err(err)) => log::warn!("{err}; falling back to lexical similarity"),
        }
    }
    lexical_similarity(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_rules() {
        let p = tokenize("Wind turbine, wind!");
        assert_eq!(p.tokens, ["wind", "turbine", "wind"]);
        assert_eq!((p.unique_count(), p.total_count()), (2, 3));
        assert_eq!(tokenize("").total_count(), 0);
        assert_eq!(tokenize("a1-b2").tokens, ["a1", "b2"]);
    }

    #[test]
    fn ttr_values() {
        assert_eq!(ttr("a b c d"), Ok(2.0));
        assert_eq!(ttr("a a a a"), Ok(0.5));
        assert_eq!(ttr(""), Err(MetricsError::EmptyText));
    }

    #[test]
    fn coverage_values() {
        assert_eq!(coverage("pump seal", "pump seal"), Ok(100.0));
        assert_eq!(coverage("pump seal", "fan belt"), Ok(0.0));
        assert_eq!(coverage("pump", "pump seal"), Ok(100.0));
        assert_eq!(coverage("pump seal", "pump"), Ok(50.0));
        assert_eq!(coverage("", "pump"), Err(MetricsError::EmptyText));
    }

    #[test]
    fn weighted_coverage_counts_repeats() {
        assert_eq!(coverage_weighted("a a b b", "a b"), Ok(50.0));
        assert_eq!(coverage_weighted("a a b b", "b b a a"), Ok(100.0));
    }

    #[test]
    fn similarity_values() {
        assert_eq!(similarity("a b", "a b", None), Ok(1.0));
        assert_eq!(similarity("a b", "c d", None), Ok(0.0));
        assert_eq!(similarity("a a b", "a b b", None), Ok(0.8));
        assert_eq!(similarity("", "a", None), Err(MetricsError::EmptyText));
    }

    struct Fixed;
    impl Embedder for Fixed {
        fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedderError> {
            if text.contains("fail") {
                return Err(EmbedderError("offline".into()));
            }
            Ok(vec![text.len() as f64, 1.0])
        }
    }

    #[test]
    fn embedder_path_and_fallback() {
        let s = similarity("ab", "ab", Some(&Fixed)).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(similarity("fail a b", "c d", Some(&Fixed)), Ok(0.0));
    }

    proptest! {
        #[test]
        fn lexical_similarity_is_symmetric(a in "[a-e ]{1,40}", b in "[a-e ]{1,40}") {
            prop_assume!(tokenize(&a).total_count() > 0 && tokenize(&b).total_count() > 0);
            let ab = similarity(&a, &b, None).unwrap();
            prop_assert_eq!(ab, similarity(&b, &a, None).unwrap());
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        }

        #[test]
        fn coverage_self_and_superset(a in "[a-h ]{1,40}", extra in "[a-z ]{0,40}") {
            prop_assume!(tokenize(&a).total_count() > 0);
            prop_assert_eq!(coverage(&a, &a).unwrap(), 100.0);
            let other = "q r";
            let base = coverage(&a, other).unwrap();
            let extended = coverage(&a, &format!("{other} {extra}")).unwrap();
            prop_assert!(extended >= base);
        }

        #[test]
        fn ttr_duplication_law(a in "[a-f ]{1,30}", k in 1usize..6) {
            prop_assume!(tokenize(&a).total_count() > 0);
            let dup = vec![a.as_str(); k].join(" ");
            let expected = ttr(&a).unwrap() / (k as f64).sqrt();
            prop_assert!((ttr(&dup).unwrap() - expected).abs() <= 1e-12);
        }
    }
}
