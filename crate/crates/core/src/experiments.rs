//! Graph generators, perturbations and the experiment registry.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{
    gap_profile, htc_identified_edges, iic_close, iic_close_unseeded, propagation_gain, ClosureRequest,
};
use crate::graph::{Edge, EdgeStatus, MixedGraph, NodeId, NodeSet};
use crate::htc::{htc_check, Witness};
use crate::oracle::{oracle_edges, OracleConfig};
use crate::seeds::{resolve_seeds, validate_iv_triple, EstimatorTag, IvTriple, SeedSet, SeedSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    IvStructured,
    AllMaximalConfounded,
    ErdosRenyi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationConfig {
    pub n: usize,
    pub family: Family,
    pub p_dir: f64,
    pub p_bi: f64,
    pub count: usize,
    pub rng_seed: u64,
}

impl EnumerationConfig {
    pub fn erdos_renyi(n: usize, count: usize, rng_seed: u64) -> Self {
        EnumerationConfig {
            n,
            family: Family::ErdosRenyi,
            p_dir: 0.3,
            p_bi: 0.2,
            count,
            rng_seed,
        }
    }
}

/// Every labelled DAG on `n` nodes as a directed edge list, in a fixed order.
pub fn enumerate_dags(n: usize) -> Vec<Vec<(usize, usize)>> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    let total = 3usize.pow(pairs.len() as u32);
    (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let mut c = code;
            let mut d = Vec::new();
            for &(a, b) in &pairs {
                match c % 3 {
                    1 => d.push((a, b)),
                    2 => d.push((b, a)),
                    _ => {}
                }
                c /= 3;
            }
            MixedGraph::new(n, d.iter().copied(), []).ok().map(|_| d)
        })
        .collect()
}

/// Triples passing the `Z -> T` check, lexicographic in `(Z, T, Y)`.
pub fn instrument_triples(g: &MixedGraph) -> Vec<IvTriple> {
    let n = g.n_nodes();
    let mut out = Vec::new();
    for z in 0..n {
        if !g.parents(NodeId(z)).is_empty() || !g.siblings(NodeId(z)).is_empty() {
            continue;
        }
        for &t in g.children(NodeId(z)) {
            for y in 0..n {
                let triple = IvTriple::new(z, t.index(), y);
                if y != z && y != t.index() && validate_iv_triple(g, triple).z_to_t_ok {
                    out.push(triple);
                }
            }
        }
    }
    out.sort();
    out
}

fn enumerate_with(
    n: usize,
    confound: impl Fn(&MixedGraph, NodeId, NodeId, IvTriple) -> bool + Sync,
) -> Vec<(MixedGraph, IvTriple)> {
    enumerate_dags(n)
        .into_par_iter()
        .filter_map(|d| {
            let dag = MixedGraph::new(n, d.iter().copied(), []).expect("enumerated DAG");
            let triple = *instrument_triples(&dag).first()?;
            let mut bi = Vec::new();
            for a in 0..n {
                for b in a + 1..n {
                    if confound(&dag, NodeId(a), NodeId(b), triple) {
                        bi.push((a, b));
                    }
                }
            }
            Some((dag.with_edges(d, bi).expect("valid"), triple))
        })
        .collect()
}

/// Labelled DAGs on `n` nodes admitting an instrument triple (exogenous `Z`,
/// `Z -> T`, no `Z -> Y`). The canonical triple is the lexicographically
/// smallest; its treatment and outcome are confounded, as is every pair of
/// nodes other than `Z` that are not ancestrally related.
pub fn enumerate_iv_structured(n: usize) -> Vec<(MixedGraph, IvTriple)> {
    enumerate_with(n, |g, a, b, triple| {
        let ty = (a == triple.t && b == triple.y) || (a == triple.y && b == triple.t);
        ty || (a != triple.z && b != triple.z && !g.is_ancestor(a, b) && !g.is_ancestor(b, a))
    })
}

/// As [`enumerate_iv_structured`] but every pair not involving the canonical
/// instrument is confounded.
pub fn enumerate_all_maximal_confounded(n: usize) -> Vec<(MixedGraph, IvTriple)> {
    enumerate_with(n, |_, a, b, t| a != t.z && b != t.z)
}

/// IV seed spec for the canonical triple.
pub fn iv_spec(triple: IvTriple) -> SeedSpec {
    SeedSpec::default().with_iv(triple)
}

/// Directed edges along a uniformly random topological order with
/// probability `p_dir`, bidirected pairs with probability `p_bi`.
pub fn random_mixed_graph<R: Rng + ?Sized>(n: usize, p_dir: f64, p_bi: f64, rng: &mut R) -> MixedGraph {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut d = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p_dir) {
                d.push((order[a], order[b]));
            }
        }
    }
    let mut bi = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(p_bi) {
                bi.push((a, b));
            }
        }
    }
    MixedGraph::new(n, d, bi).expect("forward edges are acyclic")
}

pub fn random_graph_from(cfg: &EnumerationConfig) -> MixedGraph {
    random_mixed_graph(cfg.n, cfg.p_dir, cfg.p_bi, &mut ChaCha8Rng::seed_from_u64(cfg.rng_seed))
}

/// Independent generator for item `index` under a root seed.
pub fn item_rng(root: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(index);
    rng
}

/// `count` reproducible random graphs; item `k` depends only on the root seed
/// and `k`.
pub fn random_graphs(n: usize, count: usize, p_dir: f64, p_bi: f64, rng_seed: u64) -> Vec<MixedGraph> {
    (0..count)
        .map(|k| random_mixed_graph(n, p_dir, p_bi, &mut item_rng(rng_seed, k as u64)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerturbationKind {
    MissingDirected,
    ExtraDirected,
    MissingConfounder,
    ExtraConfounder,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::MissingDirected,
        PerturbationKind::ExtraDirected,
        PerturbationKind::MissingConfounder,
        PerturbationKind::ExtraConfounder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::MissingDirected => "missing_directed",
            PerturbationKind::ExtraDirected => "extra_directed",
            PerturbationKind::MissingConfounder => "missing_confounder",
            PerturbationKind::ExtraConfounder => "extra_confounder",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("cannot apply {0:?}: not enough room for {1} new edges")]
    InfeasiblePerturbation(PerturbationKind, usize),
    #[error("rate must lie in (0, 1), got {0}")]
    BadRate(f64),
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("bad configuration: {0}")]
    BadConfig(String),
}

/// Number of edges a perturbation touches: `round(rate · m)`, at least one
/// when the relevant set is non-empty.
pub fn perturbation_size(rate: f64, m: usize) -> usize {
    if m == 0 {
        0
    } else {
        ((rate * m as f64).round() as usize).max(1)
    }
}

/// Removes or adds `rate · |relevant set|` edges of one kind. Additions of
/// directed edges never create a cycle.
pub fn perturb<R: Rng + ?Sized>(
    g: &MixedGraph,
    kind: PerturbationKind,
    rate: f64,
    rng: &mut R,
) -> Result<MixedGraph, ExperimentError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(ExperimentError::BadRate(rate));
    }
    let n = g.n_nodes();
    let mut d = g.directed_pairs();
    let mut bi = g.bidirected_pairs();
    match kind {
        PerturbationKind::MissingDirected => {
            let k = perturbation_size(rate, d.len());
            d.shuffle(rng);
            d.truncate(d.len() - k);
        }
        PerturbationKind::MissingConfounder => {
            let k = perturbation_size(rate, bi.len());
            bi.shuffle(rng);
            bi.truncate(bi.len() - k);
        }
        PerturbationKind::ExtraDirected => {
            let k = perturbation_size(rate, d.len());
            let mut added = 0;
            let mut candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).map(move |b| (a, b)))
                .filter(|&(a, b)| a != b && !g.has_edge(NodeId(a), NodeId(b)) && !g.has_edge(NodeId(b), NodeId(a)))
                .collect();
            candidates.shuffle(rng);
            let mut cur = g.clone();
            for (a, b) in candidates {
                if added == k {
                    break;
                }
                if cur.has_edge(NodeId(b), NodeId(a)) || cur.is_ancestor(NodeId(b), NodeId(a)) {
                    continue;
                }
                d.push((a, b));
                cur = g
                    .with_edges(d.iter().copied(), bi.iter().copied())
                    .expect("acyclic by construction");
                added += 1;
            }
            if added < k {
                return Err(ExperimentError::InfeasiblePerturbation(kind, k));
            }
        }
        PerturbationKind::ExtraConfounder => {
            let k = perturbation_size(rate, bi.len());
            let mut candidates: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .filter(|&(a, b)| !g.has_bidirected(NodeId(a), NodeId(b)))
                .collect();
            if candidates.len() < k {
                return Err(ExperimentError::InfeasiblePerturbation(kind, k));
            }
            candidates.shuffle(rng);
            bi.extend(candidates.into_iter().take(k));
        }
    }
    Ok(g.with_edges(d, bi).expect("perturbation keeps the graph valid"))
}

/// Half-trek criterion on the ancestral subgraph of `i`.
pub fn ad_htc_baseline(g: &MixedGraph, i: NodeId) -> Option<Witness> {
    let mut keep: NodeSet = g.ancestors(i);
    keep.insert(i);
    let (sub, map) = g.induced_subgraph(&keep);
    let local = map.iter().position(|v| *v == i).expect("i kept");
    let w = htc_check(&sub, NodeId(local))?;
    let lift = |v: NodeId| map[v.index()];
    Some(Witness {
        node: i,
        sources: w.sources.iter().map(|s| lift(*s)).collect(),
        system: w
            .system
            .into_iter()
            .map(|(t, mut h)| {
                h.source = lift(h.source);
                h.target = lift(h.target);
                h.left_side = h.left_side.iter().map(|v| lift(*v)).collect();
                h.path_nodes = h.path_nodes.iter().map(|v| lift(*v)).collect();
                (lift(t), h)
            })
            .collect(),
        known_parents: NodeSet::new(),
    })
}

pub fn ad_identified_edges(g: &MixedGraph) -> BTreeSet<Edge> {
    g.nodes()
        .filter(|&i| !g.parents(i).is_empty() && ad_htc_baseline(g, i).is_some())
        .flat_map(|i| g.parents(i).iter().map(move |&p| Edge::new(p, i)).collect::<Vec<_>>())
        .collect()
}

/// `k` distinct intervened nodes drawn uniformly.
pub fn intervention_spec<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> SeedSpec {
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut spec = SeedSpec::default();
    for &v in nodes.iter().take(k.min(n)) {
        spec = spec.with_intervened(NodeId(v));
    }
    spec
}

/// Experiment parameters; each experiment reads the fields it needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub k: usize,
    pub graphs: usize,
    pub rng_seed: u64,
    pub p_dir: f64,
    pub p_bi: f64,
    pub trials: usize,
    pub rate: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n: 6,
            k: 2,
            graphs: 1881,
            rng_seed: 0,
            p_dir: 0.3,
            p_bi: 0.2,
            trials: 10,
            rate: None,
        }
    }
}

/// A CSV-ready result with `# key=value` metadata lines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Cell by row index and column name.
    pub fn get(&self, row: usize, col: &str) -> Option<&str> {
        Some(self.rows.get(row)?.get(self.column(col)?)?.as_str())
    }

    pub fn find(&self, col: &str, value: &str) -> Option<usize> {
        let c = self.column(col)?;
        self.rows.iter().position(|r| r[c] == value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }
}

pub const EXPERIMENTS: [&str; 11] = [
    "seed_iv_exhaustive",
    "interventions",
    "convergence",
    "ad_compare",
    "precision",
    "scalability",
    "seed_tradeoff",
    "robustness",
    "gap_profile",
    "completeness",
    "enumeration",
];

pub fn run_experiment(name: &str, cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let t = match name {
        "seed_iv_exhaustive" => seed_iv_exhaustive(cfg),
        "interventions" => interventions(cfg),
        "convergence" => convergence(cfg),
        "ad_compare" => ad_compare(cfg),
        "precision" => precision(cfg),
        "scalability" => scalability(cfg),
        "seed_tradeoff" => seed_tradeoff(cfg),
        "robustness" => robustness(cfg)?,
        "gap_profile" => gap_profile_experiment(cfg),
        "completeness" => completeness(cfg),
        "enumeration" => enumeration(cfg),
        _ => return Err(ExperimentError::UnknownExperiment(name.to_string())),
    };
    Ok(t.meta("experiment", name)
        .meta("rng_seed", cfg.rng_seed)
        .meta("config", serde_json::to_string(cfg).expect("config serialises")))
}

fn pct(num: usize, den: usize) -> String {
    if den == 0 {
        "NaN".into()
    } else {
        format!("{:.4}", 100.0 * num as f64 / den as f64)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    } else {
        0.0
    };
    (m, v.sqrt())
}

fn exhaustive(n: usize) -> Vec<(MixedGraph, IvTriple)> {
    enumerate_iv_structured(n)
}

fn source_seed(g: &MixedGraph, triple: IvTriple, source: &str) -> SeedSet {
    match source {
        "none" => SeedSet::empty(),
        "iv" => resolve_seeds(g, &iv_spec(triple)).expect("canonical triple is valid"),
        "exogenous_only" => SeedSet::from_edges([(Edge::new(triple.z, triple.t), EstimatorTag::IvRatio)]),
        _ => resolve_seeds(
            g,
            &SeedSpec {
                use_ng_rule: true,
                ..SeedSpec::default()
            },
        )
        .expect("structural rule"),
    }
}

/// Identification counts on the exhaustive family under several seed sources.
pub fn seed_iv_exhaustive(cfg: &ExperimentConfig) -> Table {
    let graphs = exhaustive(cfg.n);
    let sources = ["none", "iv", "exogenous_only", "sole_parent"];
    let counts: Vec<[[usize; 3]; 4]> = graphs
        .par_iter()
        .map(|(g, triple)| {
            let mut c = [[0usize; 3]; 4];
            for (k, src) in sources.iter().enumerate() {
                let r = iic_close(&ClosureRequest::new(g.clone(), source_seed(g, *triple, src)));
                c[k] = [
                    r.n_identified(),
                    r.count(EdgeStatus::Inconclusive),
                    r.count(EdgeStatus::NonIdentifiable),
                ];
            }
            c
        })
        .collect();
    let total: usize = graphs.iter().map(|(g, _)| g.directed().len()).sum();
    let mut t = Table::new(&[
        "source",
        "graphs",
        "edges",
        "identified",
        "rate_pct",
        "inconclusive",
        "non_identifiable",
    ]);
    for (k, src) in sources.iter().enumerate() {
        let sum = |j: usize| counts.iter().map(|c| c[k][j]).sum::<usize>();
        t.push(vec![
            src.to_string(),
            graphs.len().to_string(),
            total.to_string(),
            sum(0).to_string(),
            pct(sum(0), total),
            sum(1).to_string(),
            sum(2).to_string(),
        ]);
    }
    t.meta("n", cfg.n)
}

struct InterventionRun {
    edges: usize,
    htc: usize,
    iic: usize,
    gain: Option<f64>,
    seeds: usize,
}

fn intervention_run(g: &MixedGraph, k: usize, rng: &mut ChaCha8Rng) -> InterventionRun {
    let spec = intervention_spec(g.n_nodes(), k, rng);
    let seed = resolve_seeds(g, &spec).expect("intervention seeds are valid");
    let htc = iic_close_unseeded(g);
    let res = iic_close(&ClosureRequest::new(g.clone(), seed.clone()));
    InterventionRun {
        edges: g.directed().len(),
        htc: htc.n_identified(),
        iic: res.n_identified(),
        gain: propagation_gain(&res, &seed, &htc).ok(),
        seeds: seed.len(),
    }
}

/// Random graphs with `k = 0..=cfg.k` intervened nodes.
pub fn interventions(cfg: &ExperimentConfig) -> Table {
    let graphs = random_graphs(cfg.n, cfg.graphs, cfg.p_dir, cfg.p_bi, cfg.rng_seed);
    let mut t = Table::new(&[
        "k",
        "graphs",
        "edges",
        "identified",
        "rate_pct",
        "gain_vs_htc_pct",
        "mean_gamma",
        "gamma_graphs",
        "seed_edges",
    ]);
    let mut base_rate = None;
    for k in 0..=cfg.k {
        let runs: Vec<InterventionRun> = graphs
            .par_iter()
            .enumerate()
            .map(|(idx, g)| intervention_run(g, k, &mut item_rng(cfg.rng_seed ^ 0x5eed, (idx * 64 + k) as u64)))
            .collect();
        let edges: usize = runs.iter().map(|r| r.edges).sum();
        let id: usize = runs.iter().map(|r| r.iic).sum();
        let rate = 100.0 * id as f64 / edges.max(1) as f64;
        let base = *base_rate.get_or_insert(rate);
        let gammas: Vec<f64> = runs.iter().filter_map(|r| r.gain).collect();
        let (g_mean, _) = mean_std(&gammas);
        t.push(vec![
            k.to_string(),
            graphs.len().to_string(),
            edges.to_string(),
            id.to_string(),
            format!("{rate:.4}"),
            format!("{:.4}", rate - base),
            format!("{g_mean:.4}"),
            gammas.len().to_string(),
            runs.iter().map(|r| r.seeds).sum::<usize>().to_string(),
        ]);
    }
    t.meta("n", cfg.n)
}

/// Sweeps to the fixed point on the exhaustive family with IV seeds.
pub fn convergence(cfg: &ExperimentConfig) -> Table {
    let graphs = exhaustive(cfg.n);
    let iters: Vec<usize> = graphs
        .par_iter()
        .map(|(g, triple)| {
            let seed = resolve_seeds(g, &iv_spec(*triple)).expect("valid");
            iic_close(&ClosureRequest::new(g.clone(), seed)).iterations
        })
        .collect();
    let xs: Vec<f64> = iters.iter().map(|&x| x as f64).collect();
    let (m, s) = mean_std(&xs);
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in &iters {
        *hist.entry(i).or_default() += 1;
    }
    let mut t = Table::new(&["graphs", "mean_iter", "std_iter", "max_iter", "histogram"]);
    t.push(vec![
        graphs.len().to_string(),
        format!("{m:.4}"),
        format!("{s:.4}"),
        iters.iter().max().copied().unwrap_or(0).to_string(),
        hist.iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(" "),
    ]);
    t.meta("n", cfg.n)
}

/// Ancestral-decomposition HTC against the closure.
pub fn ad_compare(cfg: &ExperimentConfig) -> Table {
    let graphs = exhaustive(cfg.n);
    let rows: Vec<[usize; 5]> = graphs
        .par_iter()
        .map(|(g, _)| {
            let ad = ad_identified_edges(g);
            let htc = htc_identified_edges(g);
            let iic = iic_close_unseeded(g).identified_set;
            [
                g.directed().len(),
                ad.len(),
                htc.len(),
                iic.difference(&ad).count(),
                ad.difference(&iic).count(),
            ]
        })
        .collect();
    let sum = |k: usize| rows.iter().map(|r| r[k]).sum::<usize>();
    let mut t = Table::new(&["graphs", "edges", "ad", "htc", "iic_only", "ad_only"]);
    t.push(vec![
        graphs.len().to_string(),
        sum(0).to_string(),
        sum(1).to_string(),
        sum(2).to_string(),
        sum(3).to_string(),
        sum(4).to_string(),
    ]);
    t.meta("n", cfg.n)
}

/// Oracle audit of every edge IIC identifies beyond HTC, IV seeds
/// conditioned on.
pub fn precision(cfg: &ExperimentConfig) -> Table {
    let graphs = exhaustive(cfg.n);
    let ocfg = OracleConfig::default().with_trials(cfg.trials).with_seed(cfg.rng_seed);
    let rows: Vec<[usize; 3]> = graphs
        .par_iter()
        .map(|(g, triple)| {
            let seed = resolve_seeds(g, &iv_spec(*triple)).expect("valid");
            let res = iic_close(&ClosureRequest::new(g.clone(), seed.clone()));
            let htc = htc_identified_edges(g);
            let new: Vec<Edge> = res
                .identified_set
                .iter()
                .filter(|e| !htc.contains(e) && !seed.contains(e))
                .copied()
                .collect();
            if new.is_empty() {
                return [0, 0, 0];
            }
            let o = oracle_edges(g, &seed.edge_set(), &ocfg).expect("oracle");
            let pass = new.iter().filter(|e| o[e]).count();
            [new.len(), pass, new.len() - pass]
        })
        .collect();
    let sum = |k: usize| rows.iter().map(|r| r[k]).sum::<usize>();
    let mut t = Table::new(&[
        "graphs",
        "newly_identified",
        "oracle_pass",
        "false_positives",
        "precision_pct",
    ]);
    t.push(vec![
        graphs.len().to_string(),
        sum(0).to_string(),
        sum(1).to_string(),
        sum(2).to_string(),
        pct(sum(1), sum(0)),
    ]);
    t.meta("n", cfg.n).meta("trials", cfg.trials)
}

/// Timing on large random graphs with `k = n/5` intervened nodes.
pub fn scalability(cfg: &ExperimentConfig) -> Table {
    let graphs = random_graphs(cfg.n, cfg.graphs, cfg.p_dir, cfg.p_bi, cfg.rng_seed);
    let k = cfg.n / 5;
    let mut rows = Vec::new();
    for (idx, g) in graphs.iter().enumerate() {
        let mut rng = item_rng(cfg.rng_seed ^ 0x5eed, idx as u64);
        let start = Instant::now();
        let run = intervention_run(g, k, &mut rng);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push((run, ms));
    }
    let rate = |f: fn(&InterventionRun) -> usize| -> Vec<f64> {
        rows.iter()
            .map(|(r, _)| 100.0 * f(r) as f64 / r.edges.max(1) as f64)
            .collect()
    };
    let (htc_m, htc_s) = mean_std(&rate(|r| r.htc));
    let (iic_m, iic_s) = mean_std(&rate(|r| r.iic));
    let (ms_m, ms_s) = mean_std(&rows.iter().map(|(_, ms)| *ms).collect::<Vec<_>>());
    let (e_m, _) = mean_std(&rows.iter().map(|(r, _)| r.edges as f64).collect::<Vec<_>>());
    let mut t = Table::new(&[
        "n",
        "graphs",
        "mean_edges",
        "k",
        "htc_pct",
        "htc_std",
        "iic_pct",
        "iic_std",
        "time_ms",
        "time_std",
    ]);
    t.push(vec![
        cfg.n.to_string(),
        graphs.len().to_string(),
        format!("{e_m:.1}"),
        k.to_string(),
        format!("{htc_m:.4}"),
        format!("{htc_s:.4}"),
        format!("{iic_m:.4}"),
        format!("{iic_s:.4}"),
        format!("{ms_m:.2}"),
        format!("{ms_s:.2}"),
    ]);
    t
}

/// Per-graph identification rate against the number of intervened nodes.
pub fn seed_tradeoff(cfg: &ExperimentConfig) -> Table {
    let graphs = random_graphs(cfg.n, cfg.graphs, cfg.p_dir, cfg.p_bi, cfg.rng_seed);
    let mut t = Table::new(&["k", "rate_mean", "rate_std", "gain_mean"]);
    let mut base = None;
    for k in 0..=cfg.k {
        let rates: Vec<f64> = graphs
            .par_iter()
            .enumerate()
            .filter(|(_, g)| !g.directed().is_empty())
            .map(|(idx, g)| {
                let r = intervention_run(g, k, &mut item_rng(cfg.rng_seed ^ 0x5eed, (idx * 64 + k) as u64));
                100.0 * r.iic as f64 / r.edges as f64
            })
            .collect();
        let (m, s) = mean_std(&rates);
        let b = *base.get_or_insert(m);
        t.push(vec![
            k.to_string(),
            format!("{m:.4}"),
            format!("{s:.4}"),
            format!("{:.4}", m - b),
        ]);
    }
    t.meta("n", cfg.n)
}

/// Precision and recall of a perturbed-graph run against the correct-graph
/// run, on the directed edges both graphs share, with `k` intervened nodes.
pub fn robustness(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let graphs = random_graphs(cfg.n, cfg.graphs, cfg.p_dir, cfg.p_bi, cfg.rng_seed);
    let rates: Vec<f64> = match cfg.rate {
        Some(r) => vec![r],
        None => vec![0.1, 0.2, 0.3],
    };
    let mut t = Table::new(&["perturbation", "rate", "graphs", "precision", "recall", "id_rate_pct"]);
    for kind in PerturbationKind::ALL {
        for &rate in &rates {
            let per: Vec<Option<[usize; 5]>> = graphs
                .par_iter()
                .enumerate()
                .map(|(idx, g)| {
                    let mut rng = item_rng(cfg.rng_seed ^ 0xbad, (idx * 16) as u64);
                    let spec = intervention_spec(g.n_nodes(), cfg.k, &mut rng);
                    let truth = iic_close(&ClosureRequest::new(g.clone(), resolve_seeds(g, &spec).ok()?));
                    let h = perturb(g, kind, rate, &mut rng).ok()?;
                    let pert = iic_close(&ClosureRequest::new(h.clone(), resolve_seeds(&h, &spec).ok()?));
                    let common: Vec<Edge> = g
                        .directed()
                        .iter()
                        .filter(|e| h.has_edge(e.from, e.to))
                        .copied()
                        .collect();
                    let p: BTreeSet<Edge> = common.iter().filter(|e| pert.is_identified(e)).copied().collect();
                    let tr: BTreeSet<Edge> = common.iter().filter(|e| truth.is_identified(e)).copied().collect();
                    Some([
                        p.intersection(&tr).count(),
                        p.len(),
                        tr.len(),
                        pert.n_identified(),
                        h.directed().len(),
                    ])
                })
                .collect();
            let ok: Vec<[usize; 5]> = per.into_iter().flatten().collect();
            let sum = |k: usize| ok.iter().map(|r| r[k]).sum::<usize>();
            let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
            t.push(vec![
                kind.as_str().to_string(),
                format!("{rate}"),
                ok.len().to_string(),
                format!("{:.4}", ratio(sum(0), sum(1))),
                format!("{:.4}", ratio(sum(0), sum(2))),
                pct(sum(3), sum(4)),
            ]);
        }
    }
    Ok(t.meta("n", cfg.n).meta("k", cfg.k))
}

/// Pooled `(|R|, |R ∩ sib(i)|)` histogram of inconclusive edges, IV seeds.
pub fn gap_profile_experiment(cfg: &ExperimentConfig) -> Table {
    let graphs = exhaustive(cfg.n);
    let recs: Vec<(usize, usize)> = graphs
        .par_iter()
        .flat_map(|(g, triple)| {
            let seed = resolve_seeds(g, &iv_spec(*triple)).expect("valid");
            let r = iic_close(&ClosureRequest::new(g.clone(), seed));
            gap_profile(g, &r)
                .into_iter()
                .map(|x| (x.r_size, x.r_sib_overlap))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut hist: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for r in recs {
        *hist.entry(r).or_default() += 1;
    }
    let mut t = Table::new(&["r_size", "r_sib_overlap", "edges"]);
    for ((a, b), c) in hist {
        t.push(vec![a.to_string(), b.to_string(), c.to_string()]);
    }
    t.meta("n", cfg.n)
}

/// Gap on graphs with and without a parent that is also a sibling.
pub fn completeness(cfg: &ExperimentConfig) -> Table {
    let graphs = enumerate_all_maximal_confounded(cfg.n);
    let mut acc: BTreeMap<bool, [usize; 3]> = BTreeMap::new();
    let per: Vec<(bool, usize, usize)> = graphs
        .par_iter()
        .map(|(g, _)| {
            let bow_free = g.nodes().all(|i| g.parents(i).iter().all(|p| !g.has_bidirected(*p, i)));
            let r = iic_close_unseeded(g);
            (bow_free, g.directed().len(), r.count(EdgeStatus::Inconclusive))
        })
        .collect();
    for (bf, e, gap) in per {
        let a = acc.entry(bf).or_default();
        a[0] += 1;
        a[1] += e;
        a[2] += gap;
    }
    let mut t = Table::new(&["parents_disjoint_from_siblings", "graphs", "edges", "inconclusive"]);
    for (bf, a) in acc {
        t.push(vec![
            bf.to_string(),
            a[0].to_string(),
            a[1].to_string(),
            a[2].to_string(),
        ]);
    }
    t.meta("n", cfg.n).meta("family", "AllMaximalConfounded")
}

/// Size of both exhaustive families.
pub fn enumeration(cfg: &ExperimentConfig) -> Table {
    let mut t = Table::new(&["family", "graphs", "edges", "htc", "iic_iv"]);
    for (name, graphs) in [
        ("IvStructured", enumerate_iv_structured(cfg.n)),
        ("AllMaximalConfounded", enumerate_all_maximal_confounded(cfg.n)),
    ] {
        let per: Vec<[usize; 3]> = graphs
            .par_iter()
            .map(|(g, triple)| {
                let seed = resolve_seeds(g, &iv_spec(*triple)).expect("valid");
                [
                    g.directed().len(),
                    iic_close_unseeded(g).n_identified(),
                    iic_close(&ClosureRequest::new(g.clone(), seed)).n_identified(),
                ]
            })
            .collect();
        let sum = |k: usize| per.iter().map(|r| r[k]).sum::<usize>();
        t.push(vec![
            name.to_string(),
            graphs.len().to_string(),
            sum(0).to_string(),
            sum(1).to_string(),
            sum(2).to_string(),
        ]);
    }
    t.meta("n", cfg.n)
}
