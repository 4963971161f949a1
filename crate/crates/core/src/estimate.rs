//! Plug-in estimation along the closure: seed estimators, then one linear
//! solve per identified node using the recorded witness, with bootstrap
//! standard errors.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{iic_close, ClosureRequest, ClosureResult, Rule};
use crate::graph::{Edge, MixedGraph, NodeId, NodeSet};
use crate::htc::half_trek_reachable;
use crate::oracle::ParamRealization;
use crate::seeds::{resolve_seeds, validate_iv_triple, EstimatorTag, IvTriple, SeedError, SeedSet, SeedSpec};

/// Observations, one row per sample. `regime[r]` is the intervened node of
/// row `r`, `None` for observational rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub regime: Vec<Option<NodeId>>,
}

impl Dataset {
    pub fn observational(x: DMatrix<f64>) -> Self {
        let regime = vec![None; x.nrows()];
        Dataset { x, regime }
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    fn rows_where(&self, f: impl Fn(Option<NodeId>) -> bool) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.x.nrows()).filter(|&r| f(self.regime[r])).collect();
        self.x.select_rows(idx.iter())
    }

    pub fn observational_rows(&self) -> DMatrix<f64> {
        self.rows_where(|r| r.is_none())
    }

    pub fn regime_rows(&self, v: NodeId) -> DMatrix<f64> {
        self.rows_where(|r| r == Some(v))
    }

    pub fn regimes(&self) -> BTreeSet<NodeId> {
        self.regime.iter().flatten().copied().collect()
    }

    /// Row resample, stratified by regime.
    fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let mut groups: BTreeMap<Option<NodeId>, Vec<usize>> = BTreeMap::new();
        for (r, g) in self.regime.iter().enumerate() {
            groups.entry(*g).or_default().push(r);
        }
        let mut idx = Vec::with_capacity(self.x.nrows());
        let mut regime = Vec::with_capacity(self.x.nrows());
        for (g, rows) in groups {
            for _ in 0..rows.len() {
                idx.push(rows[rng.random_range(0..rows.len())]);
                regime.push(g);
            }
        }
        Dataset {
            x: self.x.select_rows(idx.iter()),
            regime,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("data has {got} columns, graph has {need} nodes")]
    ShapeMismatch { need: usize, got: usize },
    #[error("intervention seed on {0} but no samples in that regime")]
    MissingRegimeData(NodeId),
    #[error("singular design when regressing node {0}")]
    SingularDesign(NodeId),
    #[error("instrument {0:?} is weak: |Cov(Z,T)| = {1:e}")]
    WeakInstrument(IvTriple, f64),
    #[error("instrument {0:?} is not valid for this edge: {1}")]
    InvalidInstrument(IvTriple, String),
    #[error("closure identifies no edge")]
    NothingIdentified,
    #[error(transparent)]
    Seed(#[from] SeedError),
}

/// Unbiased covariance of column-centred data.
pub fn sample_cov(x: &DMatrix<f64>) -> Result<DMatrix<f64>, EstimateError> {
    let n = x.nrows();
    if n < 2 {
        return Err(EstimateError::TooFewSamples { need: 2, got: n });
    }
    let means = x.row_mean();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= &means;
    }
    Ok(c.transpose() * &c / (n as f64 - 1.0))
}

/// `n` draws of `X = (I - Bᵀ)⁻¹ ε`, `ε ~ N(0, Ω)`. With `intervened`, `n`
/// further rows per intervened node, where that node's equation is replaced
/// by an independent standard normal.
pub fn simulate_data(p: &ParamRealization<f64>, n: usize, rng_seed: u64, intervened: Option<&NodeSet>) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut blocks = vec![(None, draw(p, n, &mut rng))];
    for &v in intervened.into_iter().flatten() {
        blocks.push((Some(v), draw(&do_intervention(p, v), n, &mut rng)));
    }
    let total: usize = blocks.iter().map(|(_, b)| b.nrows()).sum();
    let mut x = DMatrix::zeros(total, p.n());
    let mut regime = Vec::with_capacity(total);
    let mut r0 = 0;
    for (g, b) in blocks {
        x.view_mut((r0, 0), (b.nrows(), b.ncols())).copy_from(&b);
        regime.extend(std::iter::repeat_n(g, b.nrows()));
        r0 += b.nrows();
    }
    Dataset { x, regime }
}

/// Parameters after severing the incoming edges and confounding of `v`.
pub fn do_intervention(p: &ParamRealization<f64>, v: NodeId) -> ParamRealization<f64> {
    let mut q = p.clone();
    let k = v.index();
    q.b.column_mut(k).fill(0.0);
    q.omega.row_mut(k).fill(0.0);
    q.omega.column_mut(k).fill(0.0);
    q.omega[(k, k)] = 1.0;
    q
}

fn draw<R: Rng + ?Sized>(p: &ParamRealization<f64>, n: usize, rng: &mut R) -> DMatrix<f64> {
    let d = p.n();
    let chol = p.omega.clone().cholesky().expect("Omega is positive definite");
    let l = chol.l();
    let a = p.total_effects();
    let z = DMatrix::<f64>::from_fn(n, d, |_, _| rng.sample(StandardNormal));
    // rows: x = ε A with ε = z Lᵀ
    z * l.transpose() * a
}

/// Second moments an estimate is computed from.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub sigma: DMatrix<f64>,
    pub regimes: BTreeMap<NodeId, DMatrix<f64>>,
}

impl Moments {
    pub fn from_data(data: &Dataset) -> Result<Self, EstimateError> {
        let sigma = sample_cov(&data.observational_rows())?;
        let mut regimes = BTreeMap::new();
        for v in data.regimes() {
            regimes.insert(v, sample_cov(&data.regime_rows(v))?);
        }
        Ok(Moments { sigma, regimes })
    }

    /// Population moments of a realization, with the given regimes.
    pub fn population(p: &ParamRealization<f64>, intervened: &NodeSet) -> Self {
        Moments {
            sigma: p.implied_cov(),
            regimes: intervened
                .iter()
                .map(|&v| (v, do_intervention(p, v).implied_cov()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub n_boot: usize,
    pub kappa_max: f64,
    pub rng_seed: u64,
    pub single_unknown: bool,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            n_boot: 200,
            kappa_max: 1e8,
            rng_seed: 0,
            single_unknown: true,
        }
    }
}

/// One Phase-2 linear solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostic {
    pub node: NodeId,
    pub depth: usize,
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimates: BTreeMap<Edge, f64>,
    pub se: BTreeMap<Edge, f64>,
    pub ci: BTreeMap<Edge, (f64, f64)>,
    pub diagnostics: Vec<SolveDiagnostic>,
    pub unestimated: BTreeMap<Edge, String>,
}

/// Point estimates from moments along a closure result.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEstimate {
    pub estimates: BTreeMap<Edge, f64>,
    pub diagnostics: Vec<SolveDiagnostic>,
    pub unestimated: BTreeMap<Edge, String>,
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let lo = sv.min();
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / lo
    }
}

/// Coefficient vector of `target` regressed on `regressors` from a
/// covariance matrix.
fn regress(s: &DMatrix<f64>, target: usize, regressors: &[usize]) -> Option<DVector<f64>> {
    let a = DMatrix::from_fn(regressors.len(), regressors.len(), |r, c| {
        s[(regressors[r], regressors[c])]
    });
    let b = DVector::from_fn(regressors.len(), |r, _| s[(regressors[r], target)]);
    a.lu().solve(&b)
}

fn seed_estimate(
    g: &MixedGraph,
    e: Edge,
    tag: EstimatorTag,
    m: &Moments,
    spec: &SeedSpec,
    seeds: &SeedSet,
) -> Result<f64, String> {
    let s = &m.sigma;
    let (j, i) = (e.from.index(), e.to.index());
    match tag {
        EstimatorTag::IvRatio => {
            if s[(j, j)] > 0.0 && g.parents(e.from).is_empty() && g.siblings(e.from).is_empty() {
                return Ok(s[(j, i)] / s[(j, j)]);
            }
            let triple = spec
                .iv_triples
                .iter()
                .find(|t| t.t == e.from && t.y == e.to && validate_iv_triple(g, **t).t_to_y_ok)
                .ok_or("no instrument recorded for this edge")?;
            let (z, t) = (triple.z.index(), triple.t.index());
            Ok(s[(z, i)] / s[(z, t)])
        }
        EstimatorTag::NgBivariate => Ok(s[(j, i)] / s[(j, j)]),
        EstimatorTag::PriorValue => seeds
            .prior_values
            .get(&e)
            .copied()
            .ok_or_else(|| "prior edge has no value".to_string()),
        EstimatorTag::InterventionRegression => {
            let sv = m
                .regimes
                .get(&e.from)
                .ok_or_else(|| EstimateError::MissingRegimeData(e.from).to_string())?;
            let pa: Vec<usize> = g.parents(e.to).iter().map(|p| p.index()).collect();
            let coef = regress(sv, i, &pa).ok_or("singular design in intervened regime")?;
            let k = pa.iter().position(|&p| p == j).expect("edge parent");
            Ok(coef[k])
        }
    }
}

/// Phase 1 and Phase 2 of the estimator on fixed moments.
pub fn estimate_from_moments(
    g: &MixedGraph,
    closure: &ClosureResult,
    seeds: &SeedSet,
    spec: &SeedSpec,
    m: &Moments,
    kappa_max: f64,
) -> PointEstimate {
    let mut est: BTreeMap<Edge, f64> = BTreeMap::new();
    let mut depth: BTreeMap<Edge, usize> = BTreeMap::new();
    let mut unest: BTreeMap<Edge, String> = BTreeMap::new();
    for (e, tag) in &seeds.edges {
        if !g.has_edge(e.from, e.to) {
            continue;
        }
        match seed_estimate(g, *e, *tag, m, spec, seeds) {
            Ok(v) => {
                est.insert(*e, v);
                depth.insert(*e, 0);
            }
            Err(why) => {
                unest.insert(*e, why);
            }
        }
    }

    // witness solves in closure order
    let mut solves: Vec<(usize, NodeId, &crate::htc::Witness)> = Vec::new();
    let mut seen = BTreeSet::new();
    for p in closure.provenance.values() {
        if let (Rule::Htc | Rule::ReducedHtc, Some(w)) = (p.rule, &p.witness) {
            if seen.insert((p.iteration, w.node)) {
                solves.push((p.iteration, w.node, w));
            }
        }
    }
    solves.sort_by_key(|(it, node, _)| (*it, *node));
    let mut pending = solves;
    let mut diagnostics = Vec::new();
    let s = &m.sigma;
    loop {
        let mut progressed = false;
        let mut rest = Vec::new();
        for (it, node, w) in pending {
            let i = node;
            let targets: Vec<NodeId> = g
                .parents(i)
                .iter()
                .copied()
                .filter(|p| !w.known_parents.contains(p))
                .collect();
            let htr = half_trek_reachable(g, i);
            let needs = |v: NodeId| -> Vec<Edge> {
                if htr.contains(&v) {
                    g.parents(v).iter().map(|&p| Edge::new(p, v)).collect()
                } else {
                    Vec::new()
                }
            };
            let mut deps: Vec<Edge> = w.known_parents.iter().map(|&k| Edge::new(k, i)).collect();
            for &src in &w.sources {
                deps.extend(needs(src));
            }
            if deps.iter().any(|d| unest.contains_key(d)) {
                for t in &targets {
                    let e = Edge::new(*t, i);
                    if !est.contains_key(&e) {
                        unest.insert(e, "depends on an unestimated coefficient".into());
                    }
                }
                progressed = true;
                continue;
            }
            if !deps.iter().all(|d| est.contains_key(d)) {
                rest.push((it, node, w));
                continue;
            }
            progressed = true;
            let sources: Vec<NodeId> = targets.iter().map(|t| w.system[t].source).collect();
            // row of (I - B)ᵀ Σ for sources inside htr(i)
            let row = |src: NodeId| -> DVector<f64> {
                let mut r = s.row(src.index()).transpose();
                if htr.contains(&src) {
                    for &p in g.parents(src) {
                        r -= s.row(p.index()).transpose() * est[&Edge::new(p, src)];
                    }
                }
                r
            };
            let rows: Vec<DVector<f64>> = sources.iter().map(|&w| row(w)).collect();
            let k = targets.len();
            let a = DMatrix::from_fn(k, k, |l, c| rows[l][targets[c].index()]);
            let known: Vec<NodeId> = w.known_parents.iter().copied().collect();
            let rhs = DVector::from_fn(k, |l, _| {
                rows[l][i.index()]
                    - known
                        .iter()
                        .map(|kp| est[&Edge::new(*kp, i)] * rows[l][kp.index()])
                        .sum::<f64>()
            });
            let kappa = condition_number(&a);
            let kk = DMatrix::from_fn(k, known.len(), |l, c| rows[l][known[c].index()]);
            let gamma = if known.is_empty() || a.norm() == 0.0 {
                0.0
            } else {
                kk.norm() / a.norm()
            };
            let d = 1 + deps
                .iter()
                .map(|e| depth.get(e).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            diagnostics.push(SolveDiagnostic {
                node: i,
                depth: d,
                kappa,
                gamma,
            });
            let solved = if kappa > kappa_max { None } else { a.lu().solve(&rhs) };
            for (c, t) in targets.iter().enumerate() {
                let e = Edge::new(*t, i);
                if est.contains_key(&e) {
                    continue;
                }
                match &solved {
                    Some(b) => {
                        est.insert(e, b[c]);
                        depth.insert(e, d);
                    }
                    None => {
                        unest.insert(e, format!("ill-conditioned witness system (kappa = {kappa:.3e})"));
                    }
                }
            }
        }
        pending = rest;
        if pending.is_empty() || !progressed {
            for (_, node, w) in pending {
                for t in g.parents(node) {
                    let e = Edge::new(*t, node);
                    if !est.contains_key(&e) && !w.known_parents.contains(t) {
                        unest.insert(e, "unresolved dependency".into());
                    }
                }
            }
            break;
        }
    }
    for e in &closure.identified_set {
        if !est.contains_key(e) && !unest.contains_key(e) {
            unest.insert(*e, "no estimator available".into());
        }
    }
    for e in est.keys() {
        unest.remove(e);
    }
    PointEstimate {
        estimates: est,
        diagnostics,
        unestimated: unest,
    }
}

/// The full estimator: closure, point estimates, row bootstrap.
pub fn iic_estimate(
    g: &MixedGraph,
    data: &Dataset,
    spec: &SeedSpec,
    cfg: &EstimateConfig,
) -> Result<EstimateResult, EstimateError> {
    if data.x.ncols() != g.n_nodes() {
        return Err(EstimateError::ShapeMismatch {
            need: g.n_nodes(),
            got: data.x.ncols(),
        });
    }
    let need = g.n_nodes() + 2;
    let n_obs = data.regime.iter().filter(|r| r.is_none()).count();
    if n_obs < need {
        return Err(EstimateError::TooFewSamples { need, got: n_obs });
    }
    let seeds = resolve_seeds(g, spec)?;
    for (e, tag) in &seeds.edges {
        if *tag == EstimatorTag::InterventionRegression && data.regime_rows(e.from).nrows() < 2 {
            return Err(EstimateError::MissingRegimeData(e.from));
        }
    }
    let closure = iic_close(&ClosureRequest::new(g.clone(), seeds.clone()).single_unknown(cfg.single_unknown));
    if closure.identified_set.is_empty() {
        return Err(EstimateError::NothingIdentified);
    }
    let point = estimate_from_moments(g, &closure, &seeds, spec, &Moments::from_data(data)?, cfg.kappa_max);
    let reps: Vec<BTreeMap<Edge, f64>> = (0..cfg.n_boot)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            rng.set_stream(b as u64 + 1);
            let m = Moments::from_data(&data.resample(&mut rng)).ok()?;
            Some(estimate_from_moments(g, &closure, &seeds, spec, &m, cfg.kappa_max).estimates)
        })
        .collect();
    let z = 1.959963984540054;
    let mut se = BTreeMap::new();
    let mut ci = BTreeMap::new();
    for (e, v) in &point.estimates {
        let xs: Vec<f64> = reps
            .iter()
            .filter_map(|r| r.get(e).copied())
            .filter(|x| x.is_finite())
            .collect();
        let sd = if xs.len() > 1 {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        } else {
            f64::NAN
        };
        se.insert(*e, sd);
        ci.insert(*e, (v - z * sd, v + z * sd));
    }
    Ok(EstimateResult {
        estimates: point.estimates,
        se,
        ci,
        diagnostics: point.diagnostics,
        unestimated: point.unestimated,
    })
}

/// Per-node least squares on the parents.
pub fn ols_baseline(g: &MixedGraph, data: &Dataset) -> Result<BTreeMap<Edge, f64>, EstimateError> {
    let s = sample_cov(&data.observational_rows())?;
    let mut out = BTreeMap::new();
    for i in g.nodes() {
        let pa: Vec<usize> = g.parents(i).iter().map(|p| p.index()).collect();
        if pa.is_empty() {
            continue;
        }
        let coef = regress(&s, i.index(), &pa).ok_or(EstimateError::SingularDesign(i))?;
        for (k, p) in pa.iter().enumerate() {
            out.insert(Edge::new(*p, i.index()), coef[k]);
        }
    }
    Ok(out)
}

/// Instrument ratio `Cov(Z,Y)/Cov(Z,T)` for `T -> Y`; `None` when the triple
/// is not a valid instrument for that edge.
pub fn tsls_baseline(g: &MixedGraph, data: &Dataset, triple: IvTriple) -> Result<Option<f64>, EstimateError> {
    if !validate_iv_triple(g, triple).t_to_y_ok {
        return Ok(None);
    }
    let s = sample_cov(&data.observational_rows())?;
    let (z, t, y) = (triple.z.index(), triple.t.index(), triple.y.index());
    let szt = s[(z, t)];
    if szt.abs() < 1e-8 * (s[(z, z)] * s[(t, t)]).sqrt().max(f64::MIN_POSITIVE) {
        return Err(EstimateError::WeakInstrument(triple, szt.abs()));
    }
    Ok(Some(s[(z, y)] / szt))
}

/// Ratio estimate without checking the instrument, for demonstrating bias.
pub fn naive_iv_ratio(data: &Dataset, triple: IvTriple) -> Result<f64, EstimateError> {
    let s = sample_cov(&data.observational_rows())?;
    Ok(s[(triple.z.index(), triple.y.index())] / s[(triple.z.index(), triple.t.index())])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPropagation {
    pub depth: usize,
    pub steps: Vec<SolveDiagnostic>,
    pub c0: f64,
    pub c_d: f64,
}

/// Multiplicative error bound `C_d = C_0 ∏ (1 + κ_t γ_t)`, taking the worst
/// solve at each depth.
pub fn error_propagation_report(result: &EstimateResult) -> ErrorPropagation {
    let mut worst: BTreeMap<usize, f64> = BTreeMap::new();
    for d in &result.diagnostics {
        if d.gamma > 0.0 {
            let f = worst.entry(d.depth).or_insert(0.0);
            *f = f.max(d.kappa * d.gamma);
        }
    }
    let c0 = 1.0;
    let c_d = worst.values().fold(c0, |acc, kg| acc * (1.0 + kg));
    ErrorPropagation {
        depth: worst.keys().max().copied().unwrap_or(0),
        steps: result.diagnostics.clone(),
        c0,
        c_d,
    }
}

/// Estimation fixtures with fixed true parameters.
pub mod fixtures {
    use super::*;

    fn params(g: &MixedGraph, b: &[((usize, usize), f64)], omega: &[((usize, usize), f64)]) -> ParamRealization<f64> {
        let n = g.n_nodes();
        let mut p = ParamRealization {
            b: DMatrix::zeros(n, n),
            omega: DMatrix::identity(n, n),
        };
        for &((j, i), v) in b {
            assert!(g.has_edge(NodeId(j), NodeId(i)));
            p.b[(j, i)] = v;
        }
        for &((a, c), v) in omega {
            assert!(g.has_bidirected(NodeId(a), NodeId(c)));
            p.omega[(a, c)] = v;
            p.omega[(c, a)] = v;
        }
        p
    }

    /// Five nodes, instrument `0 -> 1 -> 2`; `B01 = 0.8`, `B12 = -0.5`,
    /// `B31 = 0.6` are identified, `4 -> 3` and `4 -> 2` are not.
    pub fn five_node() -> (MixedGraph, ParamRealization<f64>, SeedSpec) {
        let g = MixedGraph::new(5, [(0, 1), (3, 1), (1, 2), (4, 3), (4, 2)], [(1, 3), (3, 4), (2, 4)]).unwrap();
        let p = params(
            &g,
            &[
                ((0, 1), 0.8),
                ((1, 2), -0.5),
                ((3, 1), 0.6),
                ((4, 3), 0.7),
                ((4, 2), -0.6),
            ],
            &[((1, 3), 0.3), ((3, 4), 0.25), ((2, 4), -0.2)],
        );
        let spec = SeedSpec::default().with_iv(IvTriple::new(0, 1, 2));
        (g, p, spec)
    }

    /// Z=0, T=1, Y=2, W1=3, W2=4, W3=5: Z -> T -> Y, W1 -> Y, W2 -> Y,
    /// W3 -> W2, with T <-> Y, W2 <-> Y, W1 <-> T.
    pub fn six_node() -> (MixedGraph, ParamRealization<f64>, SeedSpec) {
        let g = MixedGraph::new(6, [(0, 1), (1, 2), (3, 2), (4, 2), (5, 4)], [(1, 2), (4, 2), (3, 1)])
            .unwrap()
            .with_labels(
                ["Z", "T", "Y", "W1", "W2", "W3"]
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (i, l.to_string())),
            )
            .unwrap();
        let p = params(
            &g,
            &[
                ((0, 1), 0.8),
                ((1, 2), 0.7),
                ((3, 2), 0.5),
                ((4, 2), -0.6),
                ((5, 4), 0.9),
            ],
            &[((1, 2), 0.45), ((4, 2), 0.4), ((3, 1), 0.45)],
        );
        let spec = SeedSpec::default().with_iv(IvTriple::new(0, 1, 2));
        (g, p, spec)
    }
}
