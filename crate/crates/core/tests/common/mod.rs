#![allow(dead_code)]

use std::collections::BTreeSet;

use iic::closure::{gap_profile, htc_identified_edges, iic_close, iic_close_unseeded, ClosureRequest, ClosureResult};
use iic::experiments::{ad_identified_edges, enumerate_dags, item_rng, random_mixed_graph};
use iic::graph::{Edge, EdgeStatus, MixedGraph, NodeId, NodeSet};
use iic::htc::max_halftrek_system;
use iic::seeds::{EstimatorTag, SeedSet};
use rand::seq::SliceRandom;
use rand::Rng;

/// Every mixed graph on `n` labelled nodes.
pub fn all_mixed_graphs(n: usize) -> Vec<MixedGraph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let mut out = Vec::new();
    for d in enumerate_dags(n) {
        for mask in 0..1u32 << pairs.len() {
            let bi = (0..pairs.len()).filter(|k| mask >> k & 1 == 1).map(|k| pairs[k]);
            out.push(MixedGraph::new(n, d.iter().copied(), bi).unwrap());
        }
    }
    out
}

fn directed_paths(g: &MixedGraph, from: NodeId, to: NodeId, prefix: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
    prefix.push(from);
    if from == to {
        out.push(prefix.clone());
    } else {
        for &c in g.children(from) {
            directed_paths(g, c, to, prefix, out);
        }
    }
    prefix.pop();
}

/// Right sides (as bit masks) of every half-trek from `s` to `t`.
fn half_trek_right_sides(g: &MixedGraph, s: NodeId, t: NodeId) -> Vec<u64> {
    let mut paths = Vec::new();
    directed_paths(g, s, t, &mut Vec::new(), &mut paths);
    for &u in g.siblings(s) {
        directed_paths(g, u, t, &mut Vec::new(), &mut paths);
    }
    paths
        .iter()
        .map(|p| p.iter().fold(0u64, |m, v| m | 1 << v.index()))
        .collect()
}

/// Size of a largest system with no sided intersection and the
/// lexicographically smallest source set achieving it, by exhaustive search.
pub fn brute_force_system(
    g: &MixedGraph,
    targets: &NodeSet,
    pool: &NodeSet,
    forbidden: &NodeSet,
) -> (usize, Vec<NodeId>) {
    let sources: Vec<NodeId> = pool.iter().copied().filter(|v| !forbidden.contains(v)).collect();
    let options: Vec<Vec<(usize, u64)>> = sources
        .iter()
        .map(|&s| {
            targets
                .iter()
                .flat_map(|&t| half_trek_right_sides(g, s, t).into_iter().map(move |m| (t.index(), m)))
                .collect()
        })
        .collect();
    let mut best: (usize, Vec<NodeId>) = (0, Vec::new());
    fn go(
        k: usize,
        sources: &[NodeId],
        options: &[Vec<(usize, u64)>],
        used_t: u64,
        used_r: u64,
        chosen: &mut Vec<NodeId>,
        best: &mut (usize, Vec<NodeId>),
    ) {
        if chosen.len() > best.0 || (chosen.len() == best.0 && *chosen < best.1) {
            *best = (chosen.len(), chosen.clone());
        }
        if k == sources.len() {
            return;
        }
        for &(t, m) in &options[k] {
            if used_t >> t & 1 == 0 && used_r & m == 0 {
                chosen.push(sources[k]);
                go(k + 1, sources, options, used_t | 1 << t, used_r | m, chosen, best);
                chosen.pop();
            }
        }
        go(k + 1, sources, options, used_t, used_r, chosen, best);
    }
    go(0, &sources, &options, 0, 0, &mut Vec::new(), &mut best);
    best
}

/// Flow engine against brute force at every node, for the parent set and for
/// every other node as targets. Returns the number of mismatches.
pub fn engine_mismatches(g: &MixedGraph) -> Vec<String> {
    let mut bad = Vec::new();
    for i in g.nodes() {
        let pool: NodeSet = g.nodes().filter(|v| *v != i).collect();
        let mut forbidden: NodeSet = g.siblings(i).iter().copied().collect();
        forbidden.insert(i);
        let target_sets = [g.parents(i).iter().copied().collect::<NodeSet>(), pool.clone()];
        for targets in &target_sets {
            for forb in [&forbidden, &NodeSet::new()] {
                let flow = max_halftrek_system(g, targets, &pool, forb);
                let (size, srcs) = brute_force_system(g, targets, &pool, forb);
                let flow_srcs: Vec<NodeId> = flow
                    .treks
                    .iter()
                    .map(|t| t.source)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                if flow.size != size || flow_srcs != srcs {
                    bad.push(format!(
                        "{:?} {:?} node {i} targets {targets:?}: flow {} {:?} brute {} {:?}",
                        g.directed_pairs(),
                        g.bidirected_pairs(),
                        flow.size,
                        flow_srcs,
                        size,
                        srcs
                    ));
                }
            }
        }
    }
    bad
}

/// Random graph on 4..=7 nodes with a random prior seed, from a fixed stream.
pub fn random_case(root: u64, index: u64) -> (MixedGraph, SeedSet) {
    let mut rng = item_rng(root, index);
    let n = rng.random_range(4..=7);
    let p_dir = [0.3, 0.5, 0.7][rng.random_range(0..3)];
    let p_bi = [0.2, 0.35, 0.5][rng.random_range(0..3)];
    let g = random_mixed_graph(n, p_dir, p_bi, &mut rng);
    let seed = random_seed(&g, 0.25, &mut rng);
    (g, seed)
}

pub fn random_seed<R: Rng + ?Sized>(g: &MixedGraph, p: f64, rng: &mut R) -> SeedSet {
    SeedSet::from_edges(
        g.directed()
            .iter()
            .filter(|_| rng.random_bool(p))
            .map(|e| (*e, EstimatorTag::PriorValue)),
    )
}

fn close(g: &MixedGraph, s: &SeedSet) -> ClosureResult {
    iic_close(&ClosureRequest::new(g.clone(), s.clone()))
}

fn subset(a: &BTreeSet<Edge>, b: &BTreeSet<Edge>) -> bool {
    a.is_subset(b)
}

pub fn check_monotone(g: &MixedGraph, seed: &SeedSet, extra: &SeedSet) -> Result<(), String> {
    let small = close(g, seed);
    let big = close(g, &seed.union(extra));
    if !subset(&small.identified_set, &big.identified_set) {
        return Err(format!(
            "monotonicity: {:?} {:?}",
            g.directed_pairs(),
            g.bidirected_pairs()
        ));
    }
    Ok(())
}

pub fn check_order_independent<R: Rng + ?Sized>(
    g: &MixedGraph,
    seed: &SeedSet,
    shuffles: usize,
    rng: &mut R,
) -> Result<(), String> {
    let base = close(g, seed);
    for _ in 0..shuffles {
        let mut order: Vec<NodeId> = g.nodes().collect();
        order.shuffle(rng);
        let r = iic_close(&ClosureRequest::new(g.clone(), seed.clone()).with_order(order.clone()));
        if r.status != base.status {
            return Err(format!("order {:?} changes labels on {:?}", order, g.directed_pairs()));
        }
    }
    Ok(())
}

pub fn check_composable(g: &MixedGraph, a: &SeedSet, b: &SeedSet) -> Result<(), String> {
    let ra = close(g, a);
    let rb = close(g, b);
    let rab = close(g, &a.union(b));
    let both: BTreeSet<Edge> = ra.identified_set.union(&rb.identified_set).copied().collect();
    if !subset(&both, &rab.identified_set) {
        return Err(format!("composability: {:?}", g.directed_pairs()));
    }
    Ok(())
}

pub fn check_subsumes(g: &MixedGraph) -> Result<(), String> {
    let r = iic_close_unseeded(g);
    let htc = htc_identified_edges(g);
    if !subset(&htc, &r.identified_set) {
        return Err(format!(
            "HTC-only edges on {:?} {:?}",
            g.directed_pairs(),
            g.bidirected_pairs()
        ));
    }
    let ad = ad_identified_edges(g);
    if !subset(&ad, &r.identified_set) {
        return Err(format!(
            "AD-only edges on {:?} {:?}",
            g.directed_pairs(),
            g.bidirected_pairs()
        ));
    }
    Ok(())
}

pub fn check_iterations(g: &MixedGraph, seed: &SeedSet, bound: usize) -> Result<(), String> {
    let r = close(g, seed);
    if r.iterations > bound {
        return Err(format!(
            "{} iterations on {:?} {:?}",
            r.iterations,
            g.directed_pairs(),
            g.bidirected_pairs()
        ));
    }
    Ok(())
}

pub fn check_witnesses(g: &MixedGraph, seed: &SeedSet) -> Result<(), String> {
    let r = close(g, seed);
    for (e, p) in &r.provenance {
        if let Some(w) = &p.witness {
            w.verify(g).map_err(|err| format!("witness for {e}: {err}"))?;
            if !w.system.contains_key(&e.from) && !w.known_parents.contains(&e.from) {
                return Err(format!("witness for {e} does not cover its parent"));
            }
        }
        if r.status[e] == EdgeStatus::Identified && p.witness.is_none() && !seed.contains(e) {
            return Err(format!("{e} identified without witness or seed"));
        }
    }
    Ok(())
}

pub fn check_gap_law(g: &MixedGraph, seed: &SeedSet) -> Result<(), String> {
    let r = close(g, seed);
    for rec in gap_profile(g, &r) {
        if rec.r_size < 2 || rec.r_sib_overlap < 1 {
            return Err(format!(
                "gap record {:?} on {:?} {:?}",
                rec,
                g.directed_pairs(),
                g.bidirected_pairs()
            ));
        }
    }
    Ok(())
}
