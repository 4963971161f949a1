//! Iterative identification closure: seeds and standard HTC initialise the
//! identified set, then Reduced HTC propagates it to a fixed point.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, EdgeStatus, MixedGraph, NodeId, NodeSet};
use crate::htc::{htc_check_solved, max_halftrek_system, reduced_htc_check_solved, Witness};
use crate::seeds::{EstimatorTag, SeedSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rule {
    Seed,
    Htc,
    ReducedHtc,
    InfiniteToOne,
    SingleUnknownNonId,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Seed => "Seed",
            Rule::Htc => "HTC",
            Rule::ReducedHtc => "ReducedHTC",
            Rule::InfiniteToOne => "InfiniteToOne",
            Rule::SingleUnknownNonId => "SingleUnknownNonId",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub rule: Rule,
    pub iteration: usize,
    pub witness: Option<Witness>,
    pub tag: Option<EstimatorTag>,
}

#[derive(Clone, Debug)]
pub struct ClosureRequest {
    pub graph: MixedGraph,
    pub seed: SeedSet,
    /// `None` means every directed edge.
    pub targets: Option<BTreeSet<Edge>>,
    pub single_unknown: bool,
    /// Node visiting order within a sweep; topological when `None`.
    pub order: Option<Vec<NodeId>>,
}

impl ClosureRequest {
    pub fn new(graph: MixedGraph, seed: SeedSet) -> Self {
        ClosureRequest {
            graph,
            seed,
            targets: None,
            single_unknown: true,
            order: None,
        }
    }

    pub fn with_targets(mut self, targets: BTreeSet<Edge>) -> Self {
        self.targets = Some(targets);
        self
    }

    pub fn single_unknown(mut self, on: bool) -> Self {
        self.single_unknown = on;
        self
    }

    pub fn with_order(mut self, order: Vec<NodeId>) -> Self {
        self.order = Some(order);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureResult {
    pub status: BTreeMap<Edge, EdgeStatus>,
    pub provenance: BTreeMap<Edge, Provenance>,
    pub iterations: usize,
    pub identified_set: BTreeSet<Edge>,
}

impl ClosureResult {
    pub fn count(&self, s: EdgeStatus) -> usize {
        self.status.values().filter(|v| **v == s).count()
    }

    pub fn n_identified(&self) -> usize {
        self.count(EdgeStatus::Identified)
    }

    pub fn is_identified(&self, e: &Edge) -> bool {
        self.identified_set.contains(e)
    }
}

struct State<'g> {
    g: &'g MixedGraph,
    known: Vec<NodeSet>,
    provenance: BTreeMap<Edge, Provenance>,
}

impl<'g> State<'g> {
    fn new(g: &'g MixedGraph) -> Self {
        State {
            g,
            known: vec![NodeSet::new(); g.n_nodes()],
            provenance: BTreeMap::new(),
        }
    }

    fn is_solved(&self, v: NodeId) -> bool {
        self.known[v.index()].len() == self.g.parents(v).len()
    }

    fn solved(&self) -> NodeSet {
        self.g.nodes().filter(|&v| self.is_solved(v)).collect()
    }

    fn mark(&mut self, e: Edge, p: Provenance) -> bool {
        if self.known[e.to.index()].insert(e.from) {
            self.provenance.insert(e, p);
            true
        } else {
            false
        }
    }

    /// Marks every parent edge of `w.node` not yet known.
    fn mark_witness(&mut self, w: Witness, rule: Rule, iteration: usize) -> bool {
        let i = w.node;
        let new: Vec<NodeId> = self
            .g
            .parents(i)
            .iter()
            .copied()
            .filter(|p| !self.known[i.index()].contains(p))
            .collect();
        for &p in &new {
            self.mark(
                Edge::new(p, i),
                Provenance {
                    rule,
                    iteration,
                    witness: Some(w.clone()),
                    tag: None,
                },
            );
        }
        !new.is_empty()
    }

    fn unresolved(&self) -> usize {
        self.g
            .nodes()
            .map(|v| self.g.parents(v).len() - self.known[v.index()].len())
            .sum()
    }
}

/// Runs the closure.
pub fn iic_close(req: &ClosureRequest) -> ClosureResult {
    let g = &req.graph;
    let mut st = State::new(g);
    for (e, tag) in &req.seed.edges {
        if g.has_edge(e.from, e.to) {
            st.mark(
                *e,
                Provenance {
                    rule: Rule::Seed,
                    iteration: 0,
                    witness: None,
                    tag: Some(*tag),
                },
            );
        }
    }
    for (i, w) in htc_identifiable_nodes(g) {
        st.mark_witness(w, Rule::Htc, 0);
        debug_assert!(st.is_solved(i));
    }

    let order: Vec<NodeId> = req.order.clone().unwrap_or_else(|| g.topological_order().to_vec());
    let mut iterations = 0;
    while st.unresolved() > 0 {
        iterations += 1;
        let mut changed = false;
        for &i in &order {
            if st.is_solved(i) {
                continue;
            }
            let known = st.known[i.index()].clone();
            let solved = st.solved();
            if !known.is_empty() {
                if let Ok(Some(w)) = reduced_htc_check_solved(g, i, &known, &solved) {
                    changed |= st.mark_witness(w, Rule::ReducedHtc, iterations);
                    continue;
                }
            }
            if let Some(w) = htc_check_solved(g, i, &solved) {
                changed |= st.mark_witness(w, Rule::Htc, iterations);
            }
        }
        if !changed {
            break;
        }
    }

    let identified_set: BTreeSet<Edge> = st.provenance.keys().copied().collect();
    let targets: BTreeSet<Edge> = req
        .targets
        .clone()
        .unwrap_or_else(|| g.directed().iter().copied().collect());
    let mut status = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for e in targets {
        if !g.has_edge(e.from, e.to) {
            continue;
        }
        if let Some(p) = st.provenance.get(&e) {
            status.insert(e, EdgeStatus::Identified);
            provenance.insert(e, p.clone());
            continue;
        }
        let verdict = non_identifiability(g, e, &st.known[e.to.index()], req.single_unknown);
        match verdict {
            Some(rule) => {
                status.insert(e, EdgeStatus::NonIdentifiable);
                provenance.insert(
                    e,
                    Provenance {
                        rule,
                        iteration: iterations,
                        witness: None,
                        tag: None,
                    },
                );
            }
            None => {
                status.insert(e, EdgeStatus::Inconclusive);
            }
        }
    }
    ClosureResult {
        status,
        provenance,
        iterations,
        identified_set,
    }
}

/// Closure with no side information.
pub fn iic_close_unseeded(g: &MixedGraph) -> ClosureResult {
    iic_close(&ClosureRequest::new(g.clone(), SeedSet::empty()))
}

/// Nodes whose incoming edges the recursive half-trek criterion identifies,
/// in the order they were solved.
pub fn htc_identifiable_nodes(g: &MixedGraph) -> Vec<(NodeId, Witness)> {
    let mut solved: NodeSet = g.nodes().filter(|&v| g.parents(v).is_empty()).collect();
    let mut out = Vec::new();
    loop {
        let mut changed = false;
        for i in g.nodes() {
            if solved.contains(&i) {
                continue;
            }
            if let Some(w) = htc_check_solved(g, i, &solved) {
                solved.insert(i);
                out.push((i, w));
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Edges identified by the recursive half-trek criterion alone.
pub fn htc_identified_edges(g: &MixedGraph) -> BTreeSet<Edge> {
    htc_identifiable_nodes(g)
        .into_iter()
        .flat_map(|(i, _)| g.parents(i).iter().map(move |&p| Edge::new(p, i)).collect::<Vec<_>>())
        .collect()
}

/// Non-identifiability certificate for an unresolved edge `j -> i` given the
/// known parents of `i`. The clean equations for the unknown parents `R` have
/// generic rank equal to the largest half-trek system from
/// `V \ ({i} ∪ sib(i))` onto `R`; the coefficient of `j` is free exactly when
/// dropping `j` from `R` does not lower that rank. A lone confounded unknown
/// parent that no admissible half-trek reaches gets its own label.
fn non_identifiability(g: &MixedGraph, e: Edge, known: &NodeSet, single_unknown: bool) -> Option<Rule> {
    let i = e.to;
    let r: NodeSet = g.parents(i).iter().copied().filter(|p| !known.contains(p)).collect();
    let mut forbidden: NodeSet = g.siblings(i).iter().copied().collect();
    let lone_sibling = r.len() == 1 && forbidden.contains(&e.from);
    forbidden.insert(i);
    let pool: NodeSet = g.nodes().filter(|&v| v != i).collect();
    let full = max_halftrek_system(g, &r, &pool, &forbidden).size;
    if full == r.len() {
        return None;
    }
    let mut rest = r;
    rest.remove(&e.from);
    let without = max_halftrek_system(g, &rest, &pool, &forbidden).size;
    if without != full {
        return None;
    }
    Some(if single_unknown && lone_sibling {
        Rule::SingleUnknownNonId
    } else {
        Rule::InfiniteToOne
    })
}

/// One row per inconclusive edge: `|R|` and `|R ∩ sib(i)|` at the fixed point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapRecord {
    pub edge: Edge,
    pub r_size: usize,
    pub r_sib_overlap: usize,
}

pub fn gap_profile(g: &MixedGraph, result: &ClosureResult) -> Vec<GapRecord> {
    result
        .status
        .iter()
        .filter(|(_, s)| **s == EdgeStatus::Inconclusive)
        .map(|(e, _)| {
            let i = e.to;
            let r: Vec<NodeId> = g
                .parents(i)
                .iter()
                .copied()
                .filter(|p| !result.identified_set.contains(&Edge::new(*p, i)))
                .collect();
            let overlap = r.iter().filter(|p| g.has_bidirected(**p, i)).count();
            GapRecord {
                edge: *e,
                r_size: r.len(),
                r_sib_overlap: overlap,
            }
        })
        .collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GainError {
    #[error("propagation gain needs a non-empty seed")]
    EmptySeed,
}

/// `|IIC(S0) \ HTC| / |S0|`.
pub fn propagation_gain(result: &ClosureResult, seed: &SeedSet, htc_only: &ClosureResult) -> Result<f64, GainError> {
    if seed.is_empty() {
        return Err(GainError::EmptySeed);
    }
    let gained = result.identified_set.difference(&htc_only.identified_set).count();
    Ok(gained as f64 / seed.len() as f64)
}
