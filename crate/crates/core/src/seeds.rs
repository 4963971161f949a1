//! Seed functions: turn declarative side information (instruments,
//! interventions, the sole-parent rule, prior coefficients) into an initial
//! set of edges whose coefficients are treated as known.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, GraphError, MixedGraph, NodeId};

/// How a seeded coefficient is estimated from data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorTag {
    /// `Cov(Z,T)/Var(Z)` for `Z -> T`, `Cov(Z,Y)/Cov(Z,T)` for `T -> Y`.
    IvRatio,
    /// Regression of the child on its parents within the intervened regime.
    InterventionRegression,
    /// Sole-parent, confounder-free bivariate rule.
    NgBivariate,
    /// User-supplied value.
    PriorValue,
}

impl EstimatorTag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorTag::IvRatio => "IvRatio",
            EstimatorTag::InterventionRegression => "InterventionRegression",
            EstimatorTag::NgBivariate => "NgBivariate",
            EstimatorTag::PriorValue => "PriorValue",
        }
    }
}

/// An instrument triple `(Z, T, Y)`: `Z` instruments the effect of `T` on `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IvTriple {
    pub z: NodeId,
    pub t: NodeId,
    pub y: NodeId,
}

impl IvTriple {
    pub fn new(z: usize, t: usize, y: usize) -> Self {
        IvTriple {
            z: NodeId(z),
            t: NodeId(t),
            y: NodeId(y),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEdge {
    pub edge: Edge,
    pub value: Option<f64>,
}

/// Declarative side information, resolved against one graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub iv_triples: Vec<IvTriple>,
    pub intervened: BTreeSet<NodeId>,
    pub use_ng_rule: bool,
    pub prior_edges: Vec<PriorEdge>,
}

impl SeedSpec {
    pub fn with_iv(mut self, triple: IvTriple) -> Self {
        self.iv_triples.push(triple);
        self
    }

    pub fn with_intervened(mut self, v: NodeId) -> Self {
        self.intervened.insert(v);
        self
    }

    /// Parses the label-based JSON form.
    pub fn from_json(g: &MixedGraph, text: &str) -> Result<Self, SeedError> {
        let doc: SeedDocument = serde_json::from_str(text).map_err(|e| SeedError::Malformed(e.to_string()))?;
        doc.resolve(g)
    }

    pub fn to_document(&self, g: &MixedGraph) -> SeedDocument {
        SeedDocument {
            iv: self
                .iv_triples
                .iter()
                .map(|t| [g.label(t.z), g.label(t.t), g.label(t.y)])
                .collect(),
            intervened: self.intervened.iter().map(|&v| g.label(v)).collect(),
            ng_rule: self.use_ng_rule,
            prior: self
                .prior_edges
                .iter()
                .map(|p| PriorDocument {
                    edge: [g.label(p.edge.from), g.label(p.edge.to)],
                    value: p.value,
                })
                .collect(),
        }
    }
}

/// JSON form: node references are labels (or bare indices).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedDocument {
    #[serde(default)]
    pub iv: Vec<[String; 3]>,
    #[serde(default)]
    pub intervened: Vec<String>,
    #[serde(default)]
    pub ng_rule: bool,
    #[serde(default)]
    pub prior: Vec<PriorDocument>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorDocument {
    pub edge: [String; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
}

impl SeedDocument {
    pub fn resolve(&self, g: &MixedGraph) -> Result<SeedSpec, SeedError> {
        let node = |s: &String| g.node_by_label(s).map_err(SeedError::from);
        let mut spec = SeedSpec {
            use_ng_rule: self.ng_rule,
            ..SeedSpec::default()
        };
        for [z, t, y] in &self.iv {
            let triple = IvTriple {
                z: node(z)?,
                t: node(t)?,
                y: node(y)?,
            };
            if triple.z == triple.t || triple.z == triple.y || triple.t == triple.y {
                return Err(SeedError::Malformed(format!("IV triple ({z},{t},{y}) repeats a node")));
            }
            spec.iv_triples.push(triple);
        }
        for v in &self.intervened {
            spec.intervened.insert(node(v)?);
        }
        for p in &self.prior {
            let edge = Edge {
                from: node(&p.edge[0])?,
                to: node(&p.edge[1])?,
            };
            spec.prior_edges.push(PriorEdge { edge, value: p.value });
        }
        Ok(spec)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeedError {
    #[error("prior edge {0} is not a directed edge of the graph")]
    PriorEdgeNotInGraph(Edge),
    #[error("IV triple {0:?} does not pass the instrument check: {1}")]
    InvalidTriple(IvTriple, String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("malformed seed document: {0}")]
    Malformed(String),
}

/// Structural verdict on an instrument triple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IvVerdict {
    pub z_to_t_ok: bool,
    pub t_to_y_ok: bool,
    /// Empty when both checks pass.
    pub reason: String,
}

/// Checks `(Z, T, Y)`: `Z -> T` is recoverable as `Cov(Z,T)/Var(Z)` when `Z`
/// has no parents and no siblings, `Z -> T` exists, `Z -> Y` does not, and no
/// other parent of `T` descends from `Z`.
/// `T -> Y` additionally needs the edge to exist and no parent of `Y` other
/// than `T` to descend from `T` or `Z`.
pub fn validate_iv_triple(g: &MixedGraph, triple: IvTriple) -> IvVerdict {
    let IvTriple { z, t, y } = triple;
    let mut reasons = Vec::new();
    if [z, t, y].iter().any(|v| g.check_node(*v).is_err()) || z == t || z == y || t == y {
        return IvVerdict {
            z_to_t_ok: false,
            t_to_y_ok: false,
            reason: "triple must name three distinct nodes of the graph".into(),
        };
    }
    if !g.parents(z).is_empty() {
        reasons.push(format!("{} has parents", g.label(z)));
    }
    if !g.siblings(z).is_empty() {
        reasons.push(format!("{} is confounded", g.label(z)));
    }
    if !g.has_edge(z, t) {
        reasons.push(format!("no edge {}->{}", g.label(z), g.label(t)));
    }
    if g.has_edge(z, y) {
        reasons.push(format!("direct edge {}->{} violates exclusion", g.label(z), g.label(y)));
    }
    if let Some(b) = g.parents(t).iter().find(|p| **p != z && g.is_descendant(**p, z)) {
        reasons.push(format!(
            "{} also reaches {} through {}",
            g.label(z),
            g.label(t),
            g.label(*b)
        ));
    }
    let z_to_t_ok = reasons.is_empty();
    let mut t_to_y_ok = z_to_t_ok;
    if z_to_t_ok {
        if !g.has_edge(t, y) {
            t_to_y_ok = false;
            reasons.push(format!("no edge {}->{}", g.label(t), g.label(y)));
        } else if let Some(m) = g.parents(y).iter().find(|p| g.is_descendant(**p, t)) {
            t_to_y_ok = false;
            reasons.push(format!(
                "mediator {} lies between {} and {}",
                g.label(*m),
                g.label(t),
                g.label(y)
            ));
        } else if let Some(b) = g.parents(y).iter().find(|p| **p != t && g.is_descendant(**p, z)) {
            t_to_y_ok = false;
            reasons.push(format!(
                "{} reaches {} through {}, bypassing {}",
                g.label(z),
                g.label(y),
                g.label(*b),
                g.label(t)
            ));
        }
    }
    IvVerdict {
        z_to_t_ok,
        t_to_y_ok,
        reason: reasons.join("; "),
    }
}

/// The instrument-augmented graph: every edge out of `Z` other than `Z -> T`
/// is dropped, as is every bidirected edge at `Z`.
pub fn giv_augment(g: &MixedGraph, triple: IvTriple) -> Result<MixedGraph, SeedError> {
    let v = validate_iv_triple(g, triple);
    if !v.z_to_t_ok {
        return Err(SeedError::InvalidTriple(triple, v.reason));
    }
    let z = triple.z;
    let directed = g
        .directed()
        .iter()
        .filter(|e| e.from != z || e.to == triple.t)
        .map(|e| (e.from.index(), e.to.index()));
    let bidirected = g
        .bidirected()
        .iter()
        .filter(|(a, b)| *a != z && *b != z)
        .map(|(a, b)| (a.index(), b.index()));
    Ok(g.with_edges(directed, bidirected)?)
}

/// Resolved initial edge set with one estimator tag per edge.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeedSet {
    pub edges: BTreeMap<Edge, EstimatorTag>,
    /// Triples that contributed nothing or only `Z -> T`, with the reason.
    pub rejected: Vec<(IvTriple, IvVerdict)>,
    /// Known coefficient values for prior edges.
    pub prior_values: BTreeMap<Edge, f64>,
}

impl SeedSet {
    pub fn empty() -> Self {
        SeedSet::default()
    }

    pub fn from_edges(edges: impl IntoIterator<Item = (Edge, EstimatorTag)>) -> Self {
        SeedSet {
            edges: edges.into_iter().collect(),
            ..SeedSet::default()
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains_key(e)
    }

    pub fn edge_set(&self) -> BTreeSet<Edge> {
        self.edges.keys().copied().collect()
    }

    /// Union; on a tag clash the existing tag wins.
    pub fn union(&self, other: &SeedSet) -> SeedSet {
        let mut out = self.clone();
        for (e, t) in &other.edges {
            out.edges.entry(*e).or_insert(*t);
        }
        for (e, v) in &other.prior_values {
            out.prior_values.entry(*e).or_insert(*v);
        }
        out.rejected.extend(other.rejected.iter().cloned());
        out
    }
}

/// Applies every seed rule in `spec`. Edges reachable by several rules keep
/// the first tag in the order IV, intervention, sole-parent, prior.
pub fn resolve_seeds(g: &MixedGraph, spec: &SeedSpec) -> Result<SeedSet, SeedError> {
    let mut out = SeedSet::default();
    for &triple in &spec.iv_triples {
        let v = validate_iv_triple(g, triple);
        if v.z_to_t_ok {
            out.edges
                .entry(Edge::new(triple.z, triple.t))
                .or_insert(EstimatorTag::IvRatio);
        }
        if v.t_to_y_ok {
            out.edges
                .entry(Edge::new(triple.t, triple.y))
                .or_insert(EstimatorTag::IvRatio);
        }
        if !v.t_to_y_ok {
            out.rejected.push((triple, v));
        }
    }
    for &v in &spec.intervened {
        g.check_node(v)?;
        for &c in g.children(v) {
            out.edges
                .entry(Edge::new(v, c))
                .or_insert(EstimatorTag::InterventionRegression);
        }
    }
    if spec.use_ng_rule {
        for i in g.nodes() {
            if let [j] = g.parents(i) {
                if g.siblings(i).is_empty() {
                    out.edges.entry(Edge::new(*j, i)).or_insert(EstimatorTag::NgBivariate);
                }
            }
        }
    }
    for p in &spec.prior_edges {
        if g.check_node(p.edge.from).is_err() || g.check_node(p.edge.to).is_err() || !g.has_edge(p.edge.from, p.edge.to)
        {
            return Err(SeedError::PriorEdgeNotInGraph(p.edge));
        }
        out.edges.entry(p.edge).or_insert(EstimatorTag::PriorValue);
        if let Some(val) = p.value {
            out.prior_values.insert(p.edge, val);
        }
    }
    Ok(out)
}
