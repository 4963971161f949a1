//! Immutable mixed graphs: a DAG of directed edges plus bidirected edges for
//! latent confounding between error terms.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node index, `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

/// A directed edge `from -> to`; its coefficient is `B[from][to]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
}

impl Edge {
    pub fn new(from: impl Into<NodeId>, to: impl Into<NodeId>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.from, self.to)
    }
}

/// Ordered-by-index node set.
pub type NodeSet = BTreeSet<NodeId>;

/// Three-valued verdict for a single edge coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeStatus {
    Identified,
    NonIdentifiable,
    Inconclusive,
}

impl EdgeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeStatus::Identified => "Identified",
            EdgeStatus::NonIdentifiable => "NonIdentifiable",
            EdgeStatus::Inconclusive => "Inconclusive",
        }
    }
}

impl fmt::Display for EdgeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("directed part contains a cycle")]
    CycleDetected,
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node index {index} out of range for graph with {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("unknown node label `{0}`")]
    UnknownLabel(String),
    #[error("malformed graph document: {0}")]
    Malformed(String),
}

/// Parents, children, siblings, descendants and ancestors of one node.
/// `desc` and `anc` never contain the node itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub pa: NodeSet,
    pub ch: NodeSet,
    pub sib: NodeSet,
    pub desc: NodeSet,
    pub anc: NodeSet,
}

/// Validated mixed graph. Construction checks acyclicity and caches every
/// adjacency and reachability query; the value is immutable afterwards.
#[derive(Clone, Debug)]
pub struct MixedGraph {
    n: usize,
    directed: Vec<Edge>,
    bidirected: Vec<(NodeId, NodeId)>,
    labels: BTreeMap<usize, String>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    siblings: Vec<Vec<NodeId>>,
    desc: Vec<FixedBitSet>,
    anc: Vec<FixedBitSet>,
    sib_bits: Vec<FixedBitSet>,
    topo: Vec<NodeId>,
}

impl PartialEq for MixedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.directed == other.directed && self.bidirected == other.bidirected
    }
}

impl Eq for MixedGraph {}

impl MixedGraph {
    /// Builds a graph from index pairs. Duplicate edges are merged and
    /// bidirected pairs are normalised to `(min, max)`.
    pub fn new(
        n: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let check = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(GraphError::IndexOutOfRange { index: i, n })
            }
        };
        let mut dset = BTreeSet::new();
        for (j, i) in directed {
            check(j)?;
            check(i)?;
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            dset.insert(Edge::new(j, i));
        }
        let mut bset = BTreeSet::new();
        for (a, b) in bidirected {
            check(a)?;
            check(b)?;
            if a == b {
                return Err(GraphError::SelfLoop(a));
            }
            bset.insert((NodeId(a.min(b)), NodeId(a.max(b))));
        }
        Self::from_sets(
            n,
            dset.into_iter().collect(),
            bset.into_iter().collect(),
            BTreeMap::new(),
        )
    }

    fn from_sets(
        n: usize,
        directed: Vec<Edge>,
        bidirected: Vec<(NodeId, NodeId)>,
        labels: BTreeMap<usize, String>,
    ) -> Result<Self, GraphError> {
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut siblings = vec![Vec::new(); n];
        for e in &directed {
            parents[e.to.0].push(e.from);
            children[e.from.0].push(e.to);
        }
        let mut sib_bits = vec![FixedBitSet::with_capacity(n); n];
        for &(a, b) in &bidirected {
            siblings[a.0].push(b);
            siblings[b.0].push(a);
            sib_bits[a.0].insert(b.0);
            sib_bits[b.0].insert(a.0);
        }
        for v in parents.iter_mut().chain(children.iter_mut()).chain(siblings.iter_mut()) {
            v.sort_unstable();
        }

        let topo = kahn_min_index(n, &parents, &children).ok_or(GraphError::CycleDetected)?;

        let mut desc = vec![FixedBitSet::with_capacity(n); n];
        for &v in topo.iter().rev() {
            let mut d = FixedBitSet::with_capacity(n);
            for &c in &children[v.0] {
                d.insert(c.0);
                d.union_with(&desc[c.0]);
            }
            desc[v.0] = d;
        }
        let mut anc = vec![FixedBitSet::with_capacity(n); n];
        for (v, d) in desc.iter().enumerate() {
            for w in d.ones() {
                anc[w].insert(v);
            }
        }

        Ok(MixedGraph {
            n,
            directed,
            bidirected,
            labels,
            parents,
            children,
            siblings,
            desc,
            anc,
            sib_bits,
            topo,
        })
    }

    /// Attaches cosmetic node labels.
    pub fn with_labels(mut self, labels: impl IntoIterator<Item = (usize, String)>) -> Result<Self, GraphError> {
        for (i, name) in labels {
            if i >= self.n {
                return Err(GraphError::IndexOutOfRange { index: i, n: self.n });
            }
            self.labels.insert(i, name);
        }
        Ok(self)
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.n).map(NodeId)
    }

    /// Directed edges in ascending `(from, to)` order.
    pub fn directed(&self) -> &[Edge] {
        &self.directed
    }

    /// Bidirected edges as `(a, b)` with `a < b`, ascending.
    pub fn bidirected(&self) -> &[(NodeId, NodeId)] {
        &self.bidirected
    }

    pub fn labels(&self) -> &BTreeMap<usize, String> {
        &self.labels
    }

    pub fn label(&self, v: NodeId) -> String {
        self.labels.get(&v.0).cloned().unwrap_or_else(|| v.0.to_string())
    }

    pub fn edge_label(&self, e: Edge) -> String {
        format!("{}->{}", self.label(e.from), self.label(e.to))
    }

    /// Resolves a label (or a bare decimal index) to a node.
    pub fn node_by_label(&self, name: &str) -> Result<NodeId, GraphError> {
        if let Some((&i, _)) = self.labels.iter().find(|(_, l)| l.as_str() == name) {
            return Ok(NodeId(i));
        }
        match name.parse::<usize>() {
            Ok(i) if i < self.n => Ok(NodeId(i)),
            _ => Err(GraphError::UnknownLabel(name.to_string())),
        }
    }

    pub fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if v.0 < self.n {
            Ok(())
        } else {
            Err(GraphError::IndexOutOfRange { index: v.0, n: self.n })
        }
    }

    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v.0]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.0]
    }

    pub fn siblings(&self, v: NodeId) -> &[NodeId] {
        &self.siblings[v.0]
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.parents[to.0].binary_search(&from).is_ok()
    }

    pub fn has_bidirected(&self, a: NodeId, b: NodeId) -> bool {
        self.sib_bits[a.0].contains(b.0)
    }

    /// `w` is a strict descendant of `v`.
    pub fn is_descendant(&self, w: NodeId, v: NodeId) -> bool {
        self.desc[v.0].contains(w.0)
    }

    pub fn is_ancestor(&self, w: NodeId, v: NodeId) -> bool {
        self.anc[v.0].contains(w.0)
    }

    pub(crate) fn desc_bits(&self, v: NodeId) -> &FixedBitSet {
        &self.desc[v.0]
    }

    pub fn descendants(&self, v: NodeId) -> NodeSet {
        self.desc[v.0].ones().map(NodeId).collect()
    }

    pub fn ancestors(&self, v: NodeId) -> NodeSet {
        self.anc[v.0].ones().map(NodeId).collect()
    }

    pub fn neighborhood(&self, v: NodeId) -> Result<Neighborhood, GraphError> {
        self.check_node(v)?;
        Ok(Neighborhood {
            pa: self.parents[v.0].iter().copied().collect(),
            ch: self.children[v.0].iter().copied().collect(),
            sib: self.siblings[v.0].iter().copied().collect(),
            desc: self.descendants(v),
            anc: self.ancestors(v),
        })
    }

    /// Kahn's algorithm, smallest available index first.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.topo
    }

    /// Induced subgraph on `keep`, relabelled densely in ascending order.
    /// Returns the subgraph and the map from new to old indices.
    pub fn induced_subgraph(&self, keep: &NodeSet) -> (MixedGraph, Vec<NodeId>) {
        let old: Vec<NodeId> = keep.iter().copied().collect();
        let mut new_of = vec![usize::MAX; self.n];
        for (k, v) in old.iter().enumerate() {
            new_of[v.0] = k;
        }
        let d = self
            .directed
            .iter()
            .filter(|e| keep.contains(&e.from) && keep.contains(&e.to))
            .map(|e| (new_of[e.from.0], new_of[e.to.0]));
        let b = self
            .bidirected
            .iter()
            .filter(|(a, b)| keep.contains(a) && keep.contains(b))
            .map(|(a, b)| (new_of[a.0], new_of[b.0]));
        let labels: Vec<(usize, String)> = self
            .labels
            .iter()
            .filter(|(i, _)| keep.contains(&NodeId(**i)))
            .map(|(i, l)| (new_of[*i], l.clone()))
            .collect();
        let sub = MixedGraph::new(old.len(), d, b)
            .and_then(|g| g.with_labels(labels))
            .expect("induced subgraph of a valid graph is valid");
        (sub, old)
    }

    /// Copy with directed edges removed and/or added; fails on a cycle.
    pub fn with_edges(
        &self,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<MixedGraph, GraphError> {
        MixedGraph::new(self.n, directed, bidirected)?.with_labels(self.labels.clone())
    }

    pub fn directed_pairs(&self) -> Vec<(usize, usize)> {
        self.directed.iter().map(|e| (e.from.0, e.to.0)).collect()
    }

    pub fn bidirected_pairs(&self) -> Vec<(usize, usize)> {
        self.bidirected.iter().map(|(a, b)| (a.0, b.0)).collect()
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            n: self.n,
            directed: self.directed_pairs().into_iter().map(|(a, b)| [a, b]).collect(),
            bidirected: self.bidirected_pairs().into_iter().map(|(a, b)| [a, b]).collect(),
            labels: if self.labels.is_empty() {
                None
            } else {
                Some(self.labels.iter().map(|(k, v)| (k.to_string(), v.clone())).collect())
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDocument = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
        doc.build()
    }
}

fn kahn_min_index(n: usize, parents: &[Vec<NodeId>], children: &[Vec<NodeId>]) -> Option<Vec<NodeId>> {
    let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indeg[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(NodeId(v));
        for c in &children[v] {
            indeg[c.0] -= 1;
            if indeg[c.0] == 0 {
                heap.push(Reverse(c.0));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// On-disk JSON form of a graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub n: usize,
    #[serde(default)]
    pub directed: Vec<[usize; 2]>,
    #[serde(default)]
    pub bidirected: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, String>>,
}

impl GraphDocument {
    pub fn build(&self) -> Result<MixedGraph, GraphError> {
        let g = MixedGraph::new(
            self.n,
            self.directed.iter().map(|e| (e[0], e[1])),
            self.bidirected.iter().map(|e| (e[0], e[1])),
        )?;
        let mut labels = Vec::new();
        for (k, v) in self.labels.iter().flatten() {
            let i: usize = k
                .parse()
                .map_err(|_| GraphError::Malformed(format!("label key `{k}` is not a node index")))?;
            labels.push((i, v.clone()));
        }
        g.with_labels(labels)
    }
}
