//! Half-trek systems and the node-wise criteria built on them: the standard
//! half-trek criterion, its reduced form for partially known parents, and the
//! infinite-to-one test.
//!
//! A half-trek from `v` to `w` is a directed path `v -> .. -> w` or a path
//! `v <-> s -> .. -> w`. Its left side is `{v}`; its right side is every node
//! of the directed part (including `v` for a directed path, starting at `s`
//! otherwise). A system has no sided intersection when both the left sides and
//! the right sides are pairwise disjoint.
//!
//! The maximum size of such a system is computed exactly by unit-capacity
//! max-flow on the split network `S -> L(w) -> R_in(x) -> R_out(x) -> .. -> T`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{MixedGraph, NodeId, NodeSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HalfTrekKind {
    DirectedPath,
    ConfoundedPath,
}

/// One half-trek with its full node sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HalfTrek {
    pub source: NodeId,
    pub target: NodeId,
    pub kind: HalfTrekKind,
    pub left_side: NodeSet,
    /// `[source, .., target]`; for a confounded path the second node is the
    /// sibling `s` where the directed part starts.
    pub path_nodes: Vec<NodeId>,
}

impl HalfTrek {
    pub fn right_side(&self) -> &[NodeId] {
        match self.kind {
            HalfTrekKind::DirectedPath => &self.path_nodes,
            HalfTrekKind::ConfoundedPath => &self.path_nodes[1..],
        }
    }
}

/// Certificate that the coefficients on the required parents of `node` are
/// recoverable: a sibling-free half-trek system from `sources` onto
/// `pa(node) \ known_parents`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub node: NodeId,
    pub sources: NodeSet,
    /// Keyed by the parent each half-trek ends at.
    pub system: BTreeMap<NodeId, HalfTrek>,
    pub known_parents: NodeSet,
}

impl Witness {
    fn empty(node: NodeId, known: NodeSet) -> Self {
        Witness {
            node,
            sources: NodeSet::new(),
            system: BTreeMap::new(),
            known_parents: known,
        }
    }

    /// Source assigned to each required parent.
    pub fn assignment(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.system.iter().map(|(&p, t)| (t.source, p))
    }

    /// Re-walks every path in `g` and checks all system invariants.
    pub fn verify(&self, g: &MixedGraph) -> Result<(), WitnessError> {
        let i = self.node;
        g.check_node(i).map_err(|_| WitnessError::BadNode(i))?;
        let required: NodeSet = g
            .parents(i)
            .iter()
            .copied()
            .filter(|p| !self.known_parents.contains(p))
            .collect();
        if !self.known_parents.iter().all(|k| g.has_edge(*k, i)) {
            return Err(WitnessError::KnownNotParent);
        }
        let targets: NodeSet = self.system.keys().copied().collect();
        if targets != required {
            return Err(WitnessError::TargetsMismatch);
        }
        if self.sources.len() != required.len() {
            return Err(WitnessError::SourceCount);
        }
        let used: NodeSet = self.system.values().map(|t| t.source).collect();
        if used != self.sources {
            return Err(WitnessError::SourcesMismatch);
        }
        let mut right_seen = NodeSet::new();
        for (&p, t) in &self.system {
            if t.target != p || t.path_nodes.last() != Some(&p) || t.path_nodes.first() != Some(&t.source) {
                return Err(WitnessError::BadEndpoints(t.source, p));
            }
            if t.left_side.len() != 1 || !t.left_side.contains(&t.source) {
                return Err(WitnessError::BadLeftSide(t.source));
            }
            if t.source == i || g.has_bidirected(t.source, i) {
                return Err(WitnessError::SiblingOnLeft(t.source));
            }
            let directed_part = match t.kind {
                HalfTrekKind::DirectedPath => &t.path_nodes[..],
                HalfTrekKind::ConfoundedPath => {
                    if t.path_nodes.len() < 2 || !g.has_bidirected(t.path_nodes[0], t.path_nodes[1]) {
                        return Err(WitnessError::BrokenPath(t.source, p));
                    }
                    &t.path_nodes[1..]
                }
            };
            if directed_part.windows(2).any(|w| !g.has_edge(w[0], w[1])) {
                return Err(WitnessError::BrokenPath(t.source, p));
            }
            for v in t.right_side() {
                if !right_seen.insert(*v) {
                    return Err(WitnessError::RightSidesIntersect(*v));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WitnessError {
    #[error("witness node {0} is not in the graph")]
    BadNode(NodeId),
    #[error("a known parent is not a parent of the node")]
    KnownNotParent,
    #[error("half-treks do not end exactly at the required parents")]
    TargetsMismatch,
    #[error("number of sources differs from number of required parents")]
    SourceCount,
    #[error("source set does not match the sources used by the system")]
    SourcesMismatch,
    #[error("half-trek from {0} to {1} has wrong endpoints")]
    BadEndpoints(NodeId, NodeId),
    #[error("half-trek from {0} has a left side other than its source")]
    BadLeftSide(NodeId),
    #[error("left-side node {0} is the node itself or one of its siblings")]
    SiblingOnLeft(NodeId),
    #[error("half-trek from {0} to {1} is not a path of the graph")]
    BrokenPath(NodeId, NodeId),
    #[error("right sides intersect at node {0}")]
    RightSidesIntersect(NodeId),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HtcError {
    #[error("known parent set is not a subset of pa({0})")]
    KnownNotSubsetOfParents(NodeId),
    #[error("node {0} is not in the graph")]
    BadNode(NodeId),
}

/// Result of a maximum half-trek system search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HalfTrekSystem {
    pub size: usize,
    /// One half-trek per matched target, ascending by source.
    pub treks: Vec<HalfTrek>,
}

/// Maximum number of half-treks from distinct sources in `source_pool` to
/// distinct nodes of `targets` with no sided intersection, none of whose
/// left sides lies in `forbidden_left`.
///
/// Sources are admitted greedily in ascending order, so the chosen source set
/// is the lexicographically smallest among maximum systems.
pub fn max_halftrek_system(
    g: &MixedGraph,
    targets: &NodeSet,
    source_pool: &NodeSet,
    forbidden_left: &NodeSet,
) -> HalfTrekSystem {
    let mut net = FlowNetwork::new(g, targets);
    let want = targets.len();
    let mut flow = 0;
    for &w in source_pool {
        if flow == want {
            break;
        }
        if forbidden_left.contains(&w) {
            continue;
        }
        if net.try_source(w.index()) {
            flow += 1;
        }
    }
    let treks = net.decompose(g);
    debug_assert_eq!(treks.len(), flow);
    HalfTrekSystem { size: flow, treks }
}

/// Standard half-trek criterion at node `i`: sources from `V \ {i}` outside
/// `htr(i)`, no left side in `sib(i)`. Returns the witness when a full system
/// onto `pa(i)` exists; a parentless node gets the empty witness.
pub fn htc_check(g: &MixedGraph, i: NodeId) -> Option<Witness> {
    htc_check_solved(g, i, &NodeSet::new())
}

/// As [`htc_check`], but nodes in `solved` (all incoming coefficients
/// known) may serve as sources even inside `htr(i)`.
pub fn htc_check_solved(g: &MixedGraph, i: NodeId, solved: &NodeSet) -> Option<Witness> {
    let htr = half_trek_reachable(g, i);
    let pool: NodeSet = g
        .nodes()
        .filter(|&v| v != i && (!htr.contains(&v) || solved.contains(&v)))
        .collect();
    system_witness(g, i, NodeSet::new(), &pool)
}

/// Reduced half-trek criterion: only the parents outside `known` need a
/// system, and sources are restricted to non-descendants of `i` outside
/// `htr(i)`.
pub fn reduced_htc_check(g: &MixedGraph, i: NodeId, known: &NodeSet) -> Result<Option<Witness>, HtcError> {
    reduced_htc_check_solved(g, i, known, &NodeSet::new())
}

/// As [`reduced_htc_check`], admitting solved non-descendants from `htr(i)`.
pub fn reduced_htc_check_solved(
    g: &MixedGraph,
    i: NodeId,
    known: &NodeSet,
    solved: &NodeSet,
) -> Result<Option<Witness>, HtcError> {
    check_known(g, i, known)?;
    let htr = half_trek_reachable(g, i);
    let pool: NodeSet = non_descendants(g, i)
        .into_iter()
        .filter(|v| !htr.contains(v) || solved.contains(v))
        .collect();
    Ok(system_witness(g, i, known.clone(), &pool))
}

/// Infinite-to-one test: the largest sibling-free system from
/// `V \ ({i} ∪ sib(i))` onto `pa(i)` is smaller than `|pa(i)|`.
pub fn htc_infinite_to_one(g: &MixedGraph, i: NodeId) -> bool {
    let targets: NodeSet = g.parents(i).iter().copied().collect();
    if targets.is_empty() {
        return false;
    }
    let pool: NodeSet = g.nodes().filter(|&v| v != i).collect();
    let forbidden: NodeSet = g.siblings(i).iter().copied().collect();
    max_halftrek_system(g, &targets, &pool, &forbidden).size < targets.len()
}

/// General entry point shared by the criteria: a full system onto
/// `pa(i) \ known` with sources drawn from `pool` and no left side in
/// `sib(i) ∪ {i}`.
pub fn system_witness(g: &MixedGraph, i: NodeId, known: NodeSet, pool: &NodeSet) -> Option<Witness> {
    let targets: NodeSet = g.parents(i).iter().copied().filter(|p| !known.contains(p)).collect();
    if targets.is_empty() {
        return Some(Witness::empty(i, known));
    }
    let mut forbidden: NodeSet = g.siblings(i).iter().copied().collect();
    forbidden.insert(i);
    let sys = max_halftrek_system(g, &targets, pool, &forbidden);
    if sys.size < targets.len() {
        return None;
    }
    let sources = sys.treks.iter().map(|t| t.source).collect();
    let system = sys.treks.into_iter().map(|t| (t.target, t)).collect();
    Some(Witness {
        node: i,
        sources,
        system,
        known_parents: known,
    })
}

/// Nodes reachable from `v` by a half-trek, other than `v`: its strict
/// descendants, its siblings and their descendants.
pub fn half_trek_reachable(g: &MixedGraph, v: NodeId) -> NodeSet {
    let mut out = g.descendants(v);
    for &s in g.siblings(v) {
        out.insert(s);
        out.extend(g.descendants(s));
    }
    out.remove(&v);
    out
}

pub fn non_descendants(g: &MixedGraph, i: NodeId) -> NodeSet {
    let d = g.desc_bits(i);
    g.nodes().filter(|&v| v != i && !d.contains(v.index())).collect()
}

fn check_known(g: &MixedGraph, i: NodeId, known: &NodeSet) -> Result<(), HtcError> {
    g.check_node(i).map_err(|_| HtcError::BadNode(i))?;
    if known.iter().all(|k| g.has_edge(*k, i)) {
        Ok(())
    } else {
        Err(HtcError::KnownNotSubsetOfParents(i))
    }
}

#[derive(Clone, Copy, Debug)]
struct Arc {
    to: usize,
    cap: u8,
    orig: u8,
    rev: usize,
}

/// Unit-capacity network. Vertex layout for `n` graph nodes:
/// `L(v) = v`, `R_in(v) = n + v`, `R_out(v) = 2n + v`, source `3n`, sink `3n + 1`.
struct FlowNetwork {
    n: usize,
    adj: Vec<Vec<Arc>>,
    source_arc: Vec<Option<usize>>,
    visited: Vec<u32>,
    stamp: u32,
}

impl FlowNetwork {
    fn new(g: &MixedGraph, targets: &NodeSet) -> Self {
        let n = g.n_nodes();
        let mut net = FlowNetwork {
            n,
            adj: vec![Vec::new(); 3 * n + 2],
            source_arc: vec![None; n],
            visited: vec![0; 3 * n + 2],
            stamp: 0,
        };
        for v in 0..n {
            net.add_arc(v, n + v);
            for s in g.siblings(NodeId(v)) {
                net.add_arc(v, n + s.index());
            }
            net.add_arc(n + v, 2 * n + v);
            for c in g.children(NodeId(v)) {
                net.add_arc(2 * n + v, n + c.index());
            }
        }
        for t in targets {
            net.add_arc(2 * n + t.index(), 3 * n + 1);
        }
        net
    }

    fn add_arc(&mut self, from: usize, to: usize) -> usize {
        let fwd = self.adj[from].len();
        let back = self.adj[to].len();
        self.adj[from].push(Arc {
            to,
            cap: 1,
            orig: 1,
            rev: back,
        });
        self.adj[to].push(Arc {
            to: from,
            cap: 0,
            orig: 0,
            rev: fwd,
        });
        fwd
    }

    /// Adds `S -> L(w)` and tries to push one more unit through it. The arc
    /// is disabled again on failure.
    fn try_source(&mut self, w: usize) -> bool {
        let s = 3 * self.n;
        let idx = self.add_arc(s, w);
        self.source_arc[w] = Some(idx);
        self.stamp += 1;
        if self.augment(w) {
            self.adj[s][idx].cap = 0;
            let rev = self.adj[s][idx].rev;
            self.adj[w][rev].cap = 1;
            true
        } else {
            self.adj[s][idx].cap = 0;
            self.adj[s][idx].orig = 0;
            self.source_arc[w] = None;
            false
        }
    }

    fn augment(&mut self, u: usize) -> bool {
        let sink = 3 * self.n + 1;
        if u == sink {
            return true;
        }
        self.visited[u] = self.stamp;
        for k in 0..self.adj[u].len() {
            let Arc { to, cap, rev, .. } = self.adj[u][k];
            if cap == 0 || self.visited[to] == self.stamp || to == 3 * self.n {
                continue;
            }
            if self.augment(to) {
                self.adj[u][k].cap -= 1;
                self.adj[to][rev].cap += 1;
                return true;
            }
        }
        false
    }

    fn flow_next(&self, u: usize) -> Option<usize> {
        self.adj[u].iter().find(|a| a.orig == 1 && a.cap == 0).map(|a| a.to)
    }

    fn decompose(&self, g: &MixedGraph) -> Vec<HalfTrek> {
        let n = self.n;
        let mut out = Vec::new();
        for w in 0..n {
            if self.source_arc[w].is_none() {
                continue;
            }
            let first = self.flow_next(w).expect("saturated source carries flow") - n;
            let mut path = vec![NodeId(w)];
            if first != w {
                path.push(NodeId(first));
            }
            let mut cur = first;
            loop {
                let nxt = self.flow_next(2 * n + cur).expect("flow is conserved");
                if nxt == 3 * n + 1 {
                    break;
                }
                cur = nxt - n;
                path.push(NodeId(cur));
            }
            let kind = if first == w {
                HalfTrekKind::DirectedPath
            } else {
                HalfTrekKind::ConfoundedPath
            };
            debug_assert!(kind == HalfTrekKind::DirectedPath || g.has_bidirected(NodeId(w), NodeId(first)));
            out.push(HalfTrek {
                source: NodeId(w),
                target: NodeId(cur),
                kind,
                left_side: [NodeId(w)].into_iter().collect(),
                path_nodes: path,
            });
        }
        out
    }
}
