//! KPI-centric taxonomies: a rooted, acyclic, labeled graph running from a KPI
//! through factors down to measurements.
//!
//! On disk a taxonomy is a YAML mapping:
//!
//! ```yaml
//! name: asset health
//! kpi: asset health
//! edges:
//!   - { parent: asset health, relation: analyzed, child: component quality }
//! kinds:            # optional overrides of inferred node kinds
//!   age: measurement
//! ```
//!
//! Node identity is case-insensitive with whitespace collapsed, so
//! `"Asset  Health"` and `"asset health"` name the same node. Shared children
//! (DAGs) are accepted; cycles are not.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relation that marks a leaf as a measurement source when no explicit kind is given.
const MEASUREMENT_RELATION: &str = "measured";

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("taxonomy document is empty")]
    EmptyDocument,
    #[error("malformed taxonomy document: {0}")]
    Syntax(#[from] serde_yaml::Error),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("multiple roots: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("dangling reference to node '{0}'")]
    DanglingReference(String),
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("node '{node}' cannot have kind {kind}")]
    InvalidKind { node: String, kind: NodeKind },
    #[error("edge field '{0}' is blank")]
    BlankLabel(&'static str),
}

/// Normalized node identity: lowercase, single spaces, trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(label: &str) -> Self {
        let normalized = label
            .split_whitespace()
            .map(str::to_lowercase)
            .collect::<Vec<_>>()
            .join(" ");
        Self(normalized)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    KpiRoot,
    Factor,
    Measurement,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::KpiRoot => "kpi-root",
            NodeKind::Factor => "factor",
            NodeKind::Measurement => "measurement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonNode {
    pub id: NodeId,
    pub label: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub parent: NodeId,
    pub relation: String,
    pub child: NodeId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EdgeRecord {
    parent: String,
    relation: String,
    child: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    kpi: String,
    #[serde(default)]
    edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    kinds: BTreeMap<String, NodeKind>,
}

/// An immutable, validated taxonomy.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    name: String,
    root: usize,
    nodes: Vec<TaxonNode>,
    edges: Vec<Edge>,
    index: HashMap<NodeId, usize>,
    children: Vec<Vec<usize>>,
    explicit_kinds: BTreeMap<NodeId, NodeKind>,
}

impl PartialEq for Taxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.root_id() == other.root_id()
            && self.nodes == other.nodes
            && self.edges == other.edges
    }
}

impl Taxonomy {
    pub fn parse(doc: &str) -> Result<Self, TaxonomyError> {
        if doc.trim().is_empty() {
            return Err(TaxonomyError::EmptyDocument);
        }
        let raw: TaxonomyDoc = serde_yaml::from_str(doc)?;
        Self::from_doc(raw)
    }

    fn from_doc(raw: TaxonomyDoc) -> Result<Self, TaxonomyError> {
        if raw.kpi.trim().is_empty() {
            return Err(TaxonomyError::BlankLabel("kpi"));
        }
        let mut nodes: Vec<TaxonNode> = Vec::new();
        let mut index: HashMap<NodeId, usize> = HashMap::new();
        let mut intern = |label: &str, nodes: &mut Vec<TaxonNode>| -> usize {
            let id = NodeId::new(label);
            *index.entry(id.clone()).or_insert_with(|| {
                nodes.push(TaxonNode {
                    id,
                    label: label.split_whitespace().collect::<Vec<_>>().join(" "),
                    kind: NodeKind::Factor,
                });
                nodes.len() - 1
            })
        };

        let root = intern(&raw.kpi, &mut nodes);
        let mut edges = Vec::with_capacity(raw.edges.len());
        let mut pairs = Vec::with_capacity(raw.edges.len());
        for record in &raw.edges {
            if record.parent.trim().is_empty() {
                return Err(TaxonomyError::BlankLabel("parent"));
            }
            if record.child.trim().is_empty() {
                return Err(TaxonomyError::BlankLabel("child"));
            }
            if record.relation.trim().is_empty() {
                return Err(TaxonomyError::BlankLabel("relation"));
            }
            let p = intern(&record.parent, &mut nodes);
            let c = intern(&record.child, &mut nodes);
            pairs.push((p, c));
            edges.push(Edge {
                parent: nodes[p].id.clone(),
                relation: record.relation.trim().to_string(),
                child: nodes[c].id.clone(),
            });
        }
        drop(intern);

        let mut children = vec![Vec::new(); nodes.len()];
        let mut parents = vec![Vec::new(); nodes.len()];
        for (edge_no, &(p, c)) in pairs.iter().enumerate() {
            children[p].push(c);
            parents[c].push(edge_no);
        }

        if let Some(cycle) = find_cycle(&children) {
            let mut labels: Vec<String> = cycle.iter().map(|&i| nodes[i].label.clone()).collect();
            labels.push(nodes[cycle[0]].label.clone());
            return Err(TaxonomyError::CycleDetected(labels));
        }

        let orphans: Vec<String> = (0..nodes.len())
            .filter(|&i| parents[i].is_empty() || i == root)
            .map(|i| nodes[i].label.clone())
            .collect();
        if orphans.len() != 1 || !parents[root].is_empty() {
            return Err(TaxonomyError::MultipleRoots(orphans));
        }

        let mut explicit_kinds = BTreeMap::new();
        for (label, kind) in &raw.kinds {
            let id = NodeId::new(label);
            if !index.contains_key(&id) {
                return Err(TaxonomyError::DanglingReference(label.clone()));
            }
            explicit_kinds.insert(id, *kind);
        }

        for i in 0..nodes.len() {
            let inferred = if i == root {
                NodeKind::KpiRoot
            } else if children[i].is_empty()
                && parents[i]
                    .iter()
                    .all(|&e| edges[e].relation.eq_ignore_ascii_case(MEASUREMENT_RELATION))
            {
                NodeKind::Measurement
            } else {
                NodeKind::Factor
            };
            let kind = explicit_kinds.get(&nodes[i].id).copied().unwrap_or(inferred);
            let legal = match kind {
                NodeKind::KpiRoot => i == root,
                NodeKind::Measurement => i != root && children[i].is_empty(),
                NodeKind::Factor => i != root,
            };
            if !legal {
                return Err(TaxonomyError::InvalidKind { node: nodes[i].label.clone(), kind });
            }
            nodes[i].kind = kind;
        }

        Ok(Self {
            name: raw.name.unwrap_or_else(|| nodes[root].label.clone()),
            root,
            nodes,
            edges,
            index,
            children,
            explicit_kinds,
        })
    }

    /// Serializes back to the on-disk YAML form, edges in original order.
    pub fn to_yaml(&self) -> String {
        let doc = TaxonomyDoc {
            name: Some(self.name.clone()),
            kpi: self.nodes[self.root].label.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    parent: self.label(&e.parent).to_string(),
                    relation: e.relation.clone(),
                    child: self.label(&e.child).to_string(),
                })
                .collect(),
            kinds: self
                .explicit_kinds
                .iter()
                .map(|(id, kind)| (self.label(id).to_string(), *kind))
                .collect(),
        };
        serde_yaml::to_string(&doc).expect("taxonomy document always serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &TaxonNode {
        &self.nodes[self.root]
    }

    pub fn root_id(&self) -> &NodeId {
        &self.nodes[self.root].id
    }

    pub fn nodes(&self) -> &[TaxonNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Looks a node up by any spelling of its label.
    pub fn node(&self, label: &str) -> Option<&TaxonNode> {
        self.index.get(&NodeId::new(label)).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, label: &str) -> bool {
        self.node(label).is_some()
    }

    fn label<'a>(&'a self, id: &NodeId) -> &'a str {
        &self.nodes[self.index[id]].label
    }

    fn position(&self, label: &str) -> Result<usize, TaxonomyError> {
        self.index
            .get(&NodeId::new(label))
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownNode(label.to_string()))
    }

    /// Direct children of `label` in edge-declaration order.
    pub fn children(&self, label: &str) -> Result<Vec<&TaxonNode>, TaxonomyError> {
        let at = self.position(label)?;
        Ok(self.children[at].iter().map(|&c| &self.nodes[c]).collect())
    }

    /// One sentence per edge, preceded by the root statement.
    pub fn statements(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.edges.len() + 1);
        out.push(format!("{} is root node", self.root().label));
        out.extend(self.edges.iter().map(|e| {
            format!("{} is {} by {}", self.label(&e.parent), e.relation, self.label(&e.child))
        }));
        out
    }

    /// The materialized description block used inside planning prompts.
    pub fn description(&self) -> String {
        let mut text = format!("{} taxonomy:\n", self.name);
        text.push_str(&self.statements().join("\n"));
        text
    }

    /// Depth-first pre-order from `start`, children in declaration order.
    /// Nodes shared between branches appear once, at their first visit.
    pub fn traverse_top_down(&self, start: &str) -> Result<Vec<NodeId>, TaxonomyError> {
        let start = self.position(start)?;
        let mut seen = vec![false; self.nodes.len()];
        let mut order = Vec::new();
        let mut stack = vec![start];
        while let Some(at) = stack.pop() {
            if std::mem::replace(&mut seen[at], true) {
                continue;
            }
            order.push(self.nodes[at].id.clone());
            stack.extend(self.children[at].iter().rev().copied());
        }
        Ok(order)
    }

    /// Strict descendants of `start` in top-down order.
    pub fn descendants(&self, start: &str) -> Result<Vec<&TaxonNode>, TaxonomyError> {
        Ok(self
            .traverse_top_down(start)?
            .iter()
            .skip(1)
            .map(|id| &self.nodes[self.index[id]])
            .collect())
    }

    /// True iff any strict descendant's label contains `keyword`, ignoring case.
    pub fn descendant_mentions(&self, start: &str, keyword: &str) -> Result<bool, TaxonomyError> {
        let needle = keyword.to_lowercase();
        Ok(self
            .descendants(start)?
            .iter()
            .any(|n| n.label.to_lowercase().contains(&needle)))
    }

    pub fn has_measurement_descendant(&self, start: &str) -> Result<bool, TaxonomyError> {
        Ok(self
            .descendants(start)?
            .iter()
            .any(|n| n.kind == NodeKind::Measurement))
    }
}

/// Returns the node sequence of some cycle, if one exists.
fn find_cycle(children: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut marks = vec![Mark::New; children.len()];
    for start in 0..children.len() {
        if marks[start] != Mark::New {
            continue;
        }
        // (node, next child cursor)
        let mut path: Vec<(usize, usize)> = vec![(start, 0)];
        marks[start] = Mark::Active;
        while let Some(&mut (node, ref mut cursor)) = path.last_mut() {
            if let Some(&next) = children[node].get(*cursor) {
                *cursor += 1;
                match marks[next] {
                    Mark::New => {
                        marks[next] = Mark::Active;
                        path.push((next, 0));
                    }
                    Mark::Active => {
                        let from = path.iter().position(|&(n, _)| n == next).unwrap();
                        return Some(path[from..].iter().map(|&(n, _)| n).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                marks[node] = Mark::Done;
                path.pop();
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn health() -> Taxonomy {
        fixtures::asset_health_taxonomy()
    }

    #[test]
    fn parses_asset_health() {
        let tax = health();
        assert_eq!(tax.root().label, "asset health");
        assert_eq!(tax.children("asset health").unwrap().len(), 3);
        assert_eq!(tax.nodes().len(), 18);
        assert_eq!(tax.statements().len(), 18);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let err = Taxonomy::parse("kpi: a\nedges:\n  - {parent: a, relation: x, child: a}\n").unwrap_err();
        assert!(matches!(err, TaxonomyError::CycleDetected(ref c) if c == &["a", "a"]));
    }

    #[test]
    fn longer_cycle_is_named() {
        let doc = "kpi: r\nedges:\n  - {parent: r, relation: x, child: a}\n  - {parent: a, relation: x, child: b}\n  - {parent: b, relation: x, child: a}\n";
        match Taxonomy::parse(doc).unwrap_err() {
            TaxonomyError::CycleDetected(c) => assert_eq!(c, ["a", "b", "a"]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn root_only_document() {
        let tax = Taxonomy::parse("kpi: reliability\n").unwrap();
        assert_eq!(tax.nodes().len(), 1);
        assert!(tax.edges().is_empty());
        assert_eq!(tax.statements(), ["reliability is root node"]);
        assert_eq!(tax.root().kind, NodeKind::KpiRoot);
    }

    #[test]
    fn empty_document() {
        assert!(matches!(Taxonomy::parse("  \n"), Err(TaxonomyError::EmptyDocument)));
    }

    #[test]
    fn second_root_is_rejected() {
        let doc = "kpi: r\nedges:\n  - {parent: r, relation: x, child: a}\n  - {parent: z, relation: x, child: b}\n";
        assert!(matches!(Taxonomy::parse(doc), Err(TaxonomyError::MultipleRoots(_))));
    }

    #[test]
    fn edge_into_root_is_rejected() {
        let doc = "kpi: r\nedges:\n  - {parent: r, relation: x, child: a}\n  - {parent: z, relation: x, child: r}\n";
        assert!(matches!(Taxonomy::parse(doc), Err(TaxonomyError::MultipleRoots(_))));
    }

    #[test]
    fn kinds_must_reference_known_nodes() {
        let doc = "kpi: r\nedges:\n  - {parent: r, relation: x, child: a}\nkinds:\n  ghost: measurement\n";
        assert!(matches!(Taxonomy::parse(doc), Err(TaxonomyError::DanglingReference(ref n)) if n == "ghost"));
    }

    #[test]
    fn measurement_must_be_leaf() {
        let doc = "kpi: r\nedges:\n  - {parent: r, relation: x, child: a}\n  - {parent: a, relation: x, child: b}\nkinds:\n  a: measurement\n";
        assert!(matches!(Taxonomy::parse(doc), Err(TaxonomyError::InvalidKind { .. })));
    }

    #[test]
    fn identity_is_case_and_space_insensitive() {
        let doc = "kpi: Asset Health\nedges:\n  - {parent: asset   health, relation: analyzed, child: Age}\n";
        let tax = Taxonomy::parse(doc).unwrap();
        assert_eq!(tax.nodes().len(), 2);
        assert!(tax.contains("AGE"));
    }

    #[test]
    fn dag_children_are_accepted() {
        let doc = "kpi: r\nedges:\n  - {parent: r, relation: x, child: a}\n  - {parent: r, relation: x, child: b}\n  - {parent: a, relation: x, child: c}\n  - {parent: b, relation: x, child: c}\n";
        let tax = Taxonomy::parse(doc).unwrap();
        let order: Vec<_> = tax.traverse_top_down("r").unwrap().into_iter().map(|n| n.0).collect();
        assert_eq!(order, ["r", "a", "c", "b"]);
    }

    #[test]
    fn statements_follow_edge_order() {
        let st = health().statements();
        assert_eq!(st[0], "asset health is root node");
        assert_eq!(st[1], "asset health is analyzed by component quality");
        assert!(st.contains(&"electrical issue is measured by insulation".to_string()));
        let sus = fixtures::asset_sustainability_taxonomy().statements();
        assert!(sus.contains(&"asset sustainability is analyzed by greenhouse impact".to_string()));
    }

    #[test]
    fn traversal_from_component_quality() {
        let order = health().traverse_top_down("component quality").unwrap();
        let labels: Vec<_> = order.iter().map(NodeId::as_str).collect();
        assert_eq!(
            labels,
            [
                "component quality",
                "mechanical issue",
                "on-demand inspection",
                "continuous sensors",
                "periodic chemical sampling",
                "electrical issue",
                "insulation",
                "thermal health issue",
                "chemical health issue",
            ]
        );
    }

    #[test]
    fn traversal_edge_cases() {
        let tax = health();
        assert_eq!(tax.traverse_top_down("age").unwrap(), [NodeId::new("age")]);
        assert!(matches!(tax.traverse_top_down("missing"), Err(TaxonomyError::UnknownNode(_))));
    }

    #[test]
    fn keyword_mentions() {
        let tax = health();
        assert!(tax.descendant_mentions("component quality", "sensor").unwrap());
        assert!(!tax.descendant_mentions("asset profile", "sensor").unwrap());
        assert!(!tax.descendant_mentions("continuous sensors", "sensor").unwrap());
        assert!(tax.descendant_mentions("missing", "sensor").is_err());
    }

    #[test]
    fn inferred_kinds() {
        let tax = health();
        assert_eq!(tax.node("insulation").unwrap().kind, NodeKind::Measurement);
        assert_eq!(tax.node("age").unwrap().kind, NodeKind::Factor);
        assert!(tax.has_measurement_descendant("component quality").unwrap());
        assert!(!tax.has_measurement_descendant("asset profile").unwrap());
    }

    #[test]
    fn yaml_round_trip_keeps_structure() {
        for tax in [health(), fixtures::asset_sustainability_taxonomy()] {
            let again = Taxonomy::parse(&tax.to_yaml()).unwrap();
            assert_eq!(tax, again);
        }
    }
}
