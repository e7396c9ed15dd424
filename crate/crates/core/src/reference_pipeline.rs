//! Citations for a knowledge document.
//!
//! Each part becomes a passage. The model splits a passage into short claims,
//! every claim is used as a web query, fetched pages are checked paragraph by
//! paragraph with an entailment service, and the URLs that back a claim are
//! attached to the passage as references.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::execution_engine::{KnowledgeDocument, PartLabel};
use crate::model_gateway::{ChatMessage, ChatModel, GatewayError};
use crate::prompt_registry::{bindings, ids, PromptError, PromptRegistry};

pub const DEFAULT_CLAIMS: usize = 3;
pub const DEFAULT_MAX_RESULTS: usize = 5;
pub const DEFAULT_PARALLELISM: usize = 8;

#[derive(Debug, Error)]
#[error("search provider: {0}")]
pub struct SearchError(pub String);

#[derive(Debug, Error)]
#[error("entailment service: {0}")]
pub struct NliError(pub String);

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("knowledge document has no parts")]
    EmptyDocument,
    #[error("candidate text is empty")]
    EmptyCandidate,
    #[error("passage {passage}: {source}")]
    Gateway {
        passage: usize,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    Fixture(String),
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

/// Web search plus page fetch.
pub trait SearchClient: Send + Sync {
    /// Ranked URLs for `query`, best first.
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<String>, SearchError>;
    /// Plain text of the page at `url`.
    fn fetch(&self, url: &str) -> Result<String, SearchError>;
}

/// Does `premise` entail `hypothesis`?
pub trait NliClient: Send + Sync {
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, NliError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: usize,
    pub part_label: PartLabel,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub passage_id: usize,
    pub index: usize,
    pub statement: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Error,
    NotEntailed,
    Entailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub passage_id: usize,
    pub claim_index: usize,
    /// Position of the URL in the search results, from 1.
    pub rank: usize,
    pub url: String,
    /// The paragraph that entails the claim, when one does.
    pub snippet: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Per-part tallies: claims generated, URLs returned by search, URLs that
/// entail at least one claim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationCounts {
    pub claims: Vec<usize>,
    pub identified_urls: Vec<usize>,
    pub validated_urls: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedDocument {
    pub document: KnowledgeDocument,
    /// Entailed URLs per part, deduplicated, in discovery order.
    pub citations: Vec<Vec<String>>,
    pub counts: CitationCounts,
    pub claims: Vec<Claim>,
    pub evidence: Vec<Evidence>,
}

impl CitedDocument {
    /// The document with a numbered reference list after each part.
    pub fn to_markdown(&self) -> String {
        let mut out = self.document.preamble.clone();
        for (part, urls) in self.document.parts.iter().zip(&self.citations) {
            out.push_str(part.text().trim_end());
            out.push_str("\n\n");
            if !urls.is_empty() {
                out.push_str("References:\n");
                for (i, u) in urls.iter().enumerate() {
                    out.push_str(&format!("[{}] {u}\n", i + 1));
                }
                out.push('\n');
            }
        }
        out.trim_end().to_string() + "\n"
    }
}

/// One passage per document part.
pub fn segment(kd: &KnowledgeDocument) -> Result<Vec<Passage>, ReferenceError> {
    if kd.parts.is_empty() {
        return Err(ReferenceError::EmptyDocument);
    }
    Ok(kd
        .parts
        .iter()
        .enumerate()
        .map(|(i, p)| Passage { id: i + 1, part_label: p.label, body: p.text().trim().to_string() })
        .collect())
}

fn list_prefix() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*+•]|\d+[.)]|claim\s*\d*\s*:)\s*").unwrap())
}

/// Normalizes one line of model output into a claim sentence, or `None` for
/// lines that are not claims.
fn clean_claim(line: &str) -> Option<String> {
    let line = list_prefix().replace(line.trim(), "");
    let line: String = line.chars().filter(|c| !matches!(c, '*' | '`' | '#' | '_')).collect();
    let line = line.trim();
    if line.is_empty() || line.eq_ignore_ascii_case("claims:") || line.ends_with(':') {
        return None;
    }
    let mut s = line.trim_end_matches(['.', ';', ',']).to_string();
    s.push('.');
    Some(s)
}

/// Up to `k` claims for a passage.
pub fn generate_claims(
    p: &Passage,
    gateway: &dyn ChatModel,
    reg: &PromptRegistry,
    k: usize,
) -> Result<Vec<Claim>, ReferenceError> {
    if p.body.trim().is_empty() {
        return Err(ReferenceError::Gateway { passage: p.id, source: GatewayError::EmptyPrompt });
    }
    let session = [
        ChatMessage::system(reg.get(ids::CLAIMS_SYSTEM)?.body()),
        ChatMessage::user(reg.render(
            ids::CLAIMS_USER,
            &bindings([("passage", p.body.clone()), ("claim_count", k.max(1).to_string())]),
        )?),
    ];
    let reply = gateway
        .complete(&session)
        .map_err(|source| ReferenceError::Gateway { passage: p.id, source })?;
    let claims: Vec<Claim> = reply
        .lines()
        .filter_map(clean_claim)
        .take(k)
        .enumerate()
        .map(|(i, statement)| Claim { passage_id: p.id, index: i + 1, statement })
        .collect();
    if claims.len() < k {
        log::warn!("passage {}: asked for {k} claims, got {}", p.id, claims.len());
    }
    Ok(claims)
}

/// Result of fetching one search hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedPage {
    pub rank: usize,
    pub url: String,
    pub text: Result<String, String>,
}

/// Searches for the claim and fetches each hit. Fetch failures are kept as
/// `Err` entries rather than failing the claim.
pub fn search_claim(c: &Claim, search: &dyn SearchClient, max_results: usize) -> Result<Vec<FetchedPage>, SearchError> {
    if max_results == 0 {
        return Ok(Vec::new());
    }
    let urls = search.search(&c.statement, max_results)?;
    Ok(urls
        .into_iter()
        .take(max_results)
        .enumerate()
        .map(|(i, url)| {
            let text = search.fetch(&url).map_err(|e| e.to_string());
            FetchedPage { rank: i + 1, url, text }
        })
        .collect())
}

/// Blank-line separated paragraphs.
pub fn paragraphs(text: &str) -> Vec<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\n\s*\n").unwrap());
    re.split(text).map(str::trim).filter(|p| !p.is_empty()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    pub snippet: String,
    pub detail: Option<String>,
}

/// Checks each paragraph of `candidate` against the claim; the best verdict
/// wins.
pub fn verify(c: &Claim, candidate: &str, nli: &dyn NliClient) -> Result<VerifyOutcome, ReferenceError> {
    let paras = paragraphs(candidate);
    if paras.is_empty() {
        return Err(ReferenceError::EmptyCandidate);
    }
    let mut best = VerifyOutcome { verdict: Verdict::Error, snippet: String::new(), detail: None };
    for para in paras {
        match nli.entails(para, &c.statement) {
            Ok(true) => {
                return Ok(VerifyOutcome { verdict: Verdict::Entailed, snippet: para.to_string(), detail: None });
            }
            Ok(false) => {
                best.verdict = Verdict::NotEntailed;
                best.detail = None;
            }
            Err(e) => {
                if best.verdict == Verdict::Error {
                    best.detail = Some(e.to_string());
                }
            }
        }
    }
    Ok(best)
}

/// Verdicts keyed by (claim hash, url), so reruns skip repeated checks.
#[derive(Debug, Default)]
pub struct EvidenceCache {
    entries: Mutex<HashMap<(String, String), VerifyOutcome>>,
}

impl EvidenceCache {
    pub fn key(claim: &Claim, url: &str) -> (String, String) {
        (hex::encode(Sha256::digest(claim.statement.as_bytes())), url.to_string())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, claim: &Claim, url: &str) -> Option<VerifyOutcome> {
        self.entries.lock().unwrap().get(&Self::key(claim, url)).cloned()
    }

    fn put(&self, claim: &Claim, url: &str, outcome: VerifyOutcome) {
        self.entries.lock().unwrap().insert(Self::key(claim, url), outcome);
    }
}

/// Collects citations and counts from checked evidence.
pub fn attach_references(kd: &KnowledgeDocument, claims: &[Claim], evidence: &[Evidence]) -> CitedDocument {
    let n = kd.parts.len();
    let mut sorted = evidence.to_vec();
    sorted.sort_by(|a, b| (a.passage_id, a.claim_index, a.rank).cmp(&(b.passage_id, b.claim_index, b.rank)));
    let mut citations = vec![Vec::new(); n];
    let mut identified = vec![BTreeSet::new(); n];
    for e in &sorted {
        let Some(slot) = e.passage_id.checked_sub(1).filter(|&i| i < n) else { continue };
        identified[slot].insert(e.url.clone());
        if e.verdict == Verdict::Entailed && !e.snippet.is_empty() && !citations[slot].contains(&e.url) {
            citations[slot].push(e.url.clone());
        }
    }
    let mut claim_counts = vec![0; n];
    for c in claims {
        if let Some(slot) = c.passage_id.checked_sub(1).filter(|&i| i < n) {
            claim_counts[slot] += 1;
        }
    }
    CitedDocument {
        document: kd.clone(),
        counts: CitationCounts {
            claims: claim_counts,
            identified_urls: identified.iter().map(BTreeSet::len).collect(),
            validated_urls: citations.iter().map(Vec::len).collect(),
        },
        citations,
        claims: claims.to_vec(),
        evidence: sorted,
    }
}

/// Claims, search, fetch, entailment and attachment for a whole document.
pub struct ReferencePipeline<'a> {
    pub search: &'a dyn SearchClient,
    pub nli: &'a dyn NliClient,
    pub claims_per_passage: usize,
    pub max_results: usize,
    pub parallelism: usize,
    pub cache: EvidenceCache,
}

impl<'a> ReferencePipeline<'a> {
    pub fn new(search: &'a dyn SearchClient, nli: &'a dyn NliClient) -> Self {
        Self {
            search,
            nli,
            claims_per_passage: DEFAULT_CLAIMS,
            max_results: DEFAULT_MAX_RESULTS,
            parallelism: DEFAULT_PARALLELISM,
            cache: EvidenceCache::default(),
        }
    }

    pub fn run(&self, kd: &KnowledgeDocument, gateway: &dyn ChatModel, reg: &PromptRegistry) -> Result<CitedDocument, ReferenceError> {
        let passages = segment(kd)?;
        let mut claims = Vec::new();
        for p in &passages {
            claims.extend(generate_claims(p, gateway, reg, self.claims_per_passage)?);
        }
        let evidence = self.check_claims(&claims)?;
        Ok(attach_references(kd, &claims, &evidence))
    }

    /// Search, fetch and verify every claim on a bounded worker pool.
    pub fn check_claims(&self, claims: &[Claim]) -> Result<Vec<Evidence>, ReferenceError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism.max(1))
            .build()
            .map_err(|e| ReferenceError::Pool(e.to_string()))?;
        let per_claim: Vec<Result<Vec<Evidence>, ReferenceError>> =
            pool.install(|| claims.par_iter().map(|c| self.check_claim(c)).collect());
        let mut evidence = Vec::new();
        for r in per_claim {
            evidence.extend(r?);
        }
        evidence.sort_by(|a, b| (a.passage_id, a.claim_index, a.rank).cmp(&(b.passage_id, b.claim_index, b.rank)));
        Ok(evidence)
    }

    fn check_claim(&self, c: &Claim) -> Result<Vec<Evidence>, ReferenceError> {
        let pages = search_claim(c, self.search, self.max_results)?;
        Ok(pages
            .into_iter()
            .map(|page| {
                let outcome = match page.text {
                    Err(e) => VerifyOutcome { verdict: Verdict::Error, snippet: String::new(), detail: Some(e) },
                    Ok(text) => match self.cache.get(c, &page.url) {
                        Some(hit) => hit,
                        None => {
                            let o = verify(c, &text, self.nli).unwrap_or_else(|e| VerifyOutcome {
                                verdict: Verdict::Error,
                                snippet: String::new(),
                                detail: Some(e.to_string()),
                            });
                            self.cache.put(c, &page.url, o.clone());
                            o
                        }
                    },
                };
                Evidence {
                    passage_id: c.passage_id,
                    claim_index: c.index,
                    rank: page.rank,
                    url: page.url,
                    snippet: outcome.snippet,
                    verdict: outcome.verdict,
                    detail: outcome.detail,
                }
            })
            .collect())
    }
}

/// File-backed search results.
///
/// ```yaml
/// results:            # query -> ranked urls
///   "A furnace heats material.": [https://a.example, https://b.example]
/// default: []         # urls for queries not listed
/// pages:              # url -> page text; unlisted urls fail to fetch
///   https://a.example: "..."
/// unreachable: false  # every search fails
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedSearch {
    #[serde(default)]
    pub results: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub default: Vec<String>,
    #[serde(default)]
    pub pages: BTreeMap<String, String>,
    #[serde(default)]
    pub unreachable: bool,
}

impl ScriptedSearch {
    pub fn from_yaml(text: &str) -> Result<Self, ReferenceError> {
        serde_yaml::from_str(text).map_err(|e| ReferenceError::Fixture(format!("search fixture: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, ReferenceError> {
        let text = fs::read_to_string(path).map_err(|e| ReferenceError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }
}

impl SearchClient for ScriptedSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<String>, SearchError> {
        if self.unreachable {
            return Err(SearchError("provider unreachable".into()));
        }
        let urls = self.results.get(query.trim()).unwrap_or(&self.default);
        Ok(urls.iter().take(max_results).cloned().collect())
    }

    fn fetch(&self, url: &str) -> Result<String, SearchError> {
        self.pages.get(url).cloned().ok_or_else(|| SearchError(format!("fetch failed: {url}")))
    }
}

/// One entailment rule: when both substrings occur (case-insensitively),
/// the verdict applies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliRule {
    #[serde(default)]
    pub premise: String,
    #[serde(default)]
    pub hypothesis: String,
    pub entailed: bool,
}

/// File-backed entailment: the first matching rule decides, otherwise
/// `default`.
///
/// ```yaml
/// default: false
/// rules:
///   - { premise: "kinetic energy", hypothesis: "wind turbine", entailed: true }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedNli {
    #[serde(default)]
    pub default: bool,
    #[serde(default)]
    pub rules: Vec<NliRule>,
}

impl ScriptedNli {
    pub fn always(entailed: bool) -> Self {
        Self { default: entailed, rules: Vec::new() }
    }

    pub fn from_yaml(text: &str) -> Result<Self, ReferenceError> {
        serde_yaml::from_str(text).map_err(|e| ReferenceError::Fixture(format!("nli fixture: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, ReferenceError> {
        let text = fs::read_to_string(path).map_err(|e| ReferenceError::Fixture(format!("{}: {e}", path.display())))?;
        Self::from_yaml(&text)
    }
}

impl NliClient for ScriptedNli {
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, NliError> {
        let (p, h) = (premise.to_lowercase(), hypothesis.to_lowercase());
        Ok(self
            .rules
            .iter()
            .find(|r| p.contains(&r.premise.to_lowercase()) && h.contains(&r.hypothesis.to_lowercase()))
            .map_or(self.default, |r| r.entailed))
    }
}

fn http_client(timeout: Duration) -> Result<reqwest::blocking::Client, String> {
    reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| e.to_string())
}

fn strip_html(html: &str) -> String {
    static BLOCK: OnceLock<Regex> = OnceLock::new();
    static TAG: OnceLock<Regex> = OnceLock::new();
    static SPACE: OnceLock<Regex> = OnceLock::new();
    let block = BLOCK.get_or_init(|| Regex::new(r"(?is)<(script|style)[^>]*>.*?</(script|style)>").unwrap());
    let tag = TAG.get_or_init(|| Regex::new(r"(?i)</?(p|div|br|li|h[1-6]|section|article)[^>]*>|<[^>]+>").unwrap());
    let space = SPACE.get_or_init(|| Regex::new(r"[ \t]+").unwrap());
    let no_code = block.replace_all(html, "");
    let text = tag.replace_all(&no_code, |c: &regex::Captures<'_>| if c.get(1).is_some() { "\n\n" } else { "" });
    let text = text.replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">").replace("&nbsp;", " ");
    space.replace_all(&text, " ").to_string()
}

/// Search over HTTP: `GET {endpoint}?q=<query>&n=<max>` returning
/// `{"results": [{"url": ...}, ...]}`; pages fetched directly and reduced to
/// text.
pub struct HttpSearchClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpSearchClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, SearchError> {
        Ok(Self { endpoint: endpoint.into(), client: http_client(timeout).map_err(SearchError)? })
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    url: String,
}

impl SearchClient for HttpSearchClient {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<String>, SearchError> {
        let resp: SearchResponse = self
            .client
            .get(&self.endpoint)
            .query(&[("q", query), ("n", &max_results.to_string())])
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| SearchError(e.to_string()))?;
        Ok(resp.results.into_iter().take(max_results).map(|h| h.url).collect())
    }

    fn fetch(&self, url: &str) -> Result<String, SearchError> {
        let body = self
            .client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| SearchError(e.to_string()))?;
        Ok(strip_html(&body))
    }
}

/// Entailment over HTTP: `POST {endpoint}` with `{"premise", "hypothesis"}`,
/// answered by `{"entailed": bool}`.
pub struct HttpNliClient {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpNliClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<Self, NliError> {
        Ok(Self { endpoint: endpoint.into(), client: http_client(timeout).map_err(NliError)? })
    }
}

#[derive(Deserialize)]
struct NliResponse {
    entailed: bool,
}

impl NliClient for HttpNliClient {
    fn entails(&self, premise: &str, hypothesis: &str) -> Result<bool, NliError> {
        let resp: NliResponse = self
            .client
            .post(&self.endpoint)
            .json(&serde_json::json!({ "premise": premise, "hypothesis": hypothesis }))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| NliError(e.to_string()))?;
        Ok(resp.entailed)
    }
}
