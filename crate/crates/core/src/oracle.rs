//! Numerical ground truth for generic identifiability: Jacobian null-space
//! tests of the parameter-to-covariance map at random parameter draws.
//!
//! Convention: `X = Bᵀ X + ε` with `B[(j, i)]` the coefficient on `j -> i`,
//! so `Σ = Aᵀ Ω A` where `A = (I - B)⁻¹`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, RealField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closure::{iic_close, ClosureRequest};
use crate::graph::{Edge, EdgeStatus, MixedGraph};
use crate::seeds::SeedSet;

/// Coefficients and error covariance for one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRealization<T: RealField + Copy> {
    pub b: DMatrix<T>,
    pub omega: DMatrix<T>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no well-conditioned realization after {0} draws")]
    DegenerateRealization(usize),
    #[error("edge {0} is not in the graph")]
    EdgeNotInGraph(Edge),
}

/// `Uniform([-2,-0.5] ∪ [0.5,2])`.
pub fn sample_coefficient<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let m = rng.random_range(0.5..2.0);
    if rng.random_bool(0.5) {
        m
    } else {
        -m
    }
}

fn from_f64<T: RealField + Copy>(x: f64) -> T {
    nalgebra::convert(x)
}

impl<T: RealField + Copy> ParamRealization<T> {
    /// Draws coefficients on `D`, unit error variances and confounding
    /// covariances from `Uniform(±[0.1, 0.4])`; the diagonal is raised to
    /// diagonal dominance when the draw is not positive definite.
    pub fn sample<R: Rng + ?Sized>(g: &MixedGraph, rng: &mut R) -> Self {
        let n = g.n_nodes();
        let mut b = DMatrix::<T>::zeros(n, n);
        for e in g.directed() {
            b[(e.from.index(), e.to.index())] = from_f64(sample_coefficient(rng));
        }
        let mut omega = DMatrix::<T>::identity(n, n);
        for (a, c) in g.bidirected() {
            let m = rng.random_range(0.1..0.4);
            let v = if rng.random_bool(0.5) { m } else { -m };
            omega[(a.index(), c.index())] = from_f64(v);
            omega[(c.index(), a.index())] = from_f64(v);
        }
        if omega.clone().cholesky().is_none() {
            for r in 0..n {
                let off = (0..n)
                    .filter(|&c| c != r)
                    .fold(T::zero(), |s, c| s + omega[(r, c)].abs());
                if off >= omega[(r, r)] {
                    omega[(r, r)] = off + from_f64(0.1);
                }
            }
        }
        ParamRealization { b, omega }
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    /// `(I - B)⁻¹`; `B` is nilpotent so the Neumann series terminates.
    pub fn total_effects(&self) -> DMatrix<T> {
        let n = self.n();
        let mut acc = DMatrix::<T>::identity(n, n);
        let mut term = DMatrix::<T>::identity(n, n);
        for _ in 1..n {
            term = &term * &self.b;
            acc += &term;
        }
        acc
    }

    /// Model-implied covariance `Aᵀ Ω A`.
    pub fn implied_cov(&self) -> DMatrix<T> {
        let a = self.total_effects();
        let s = a.transpose() * &self.omega * &a;
        (&s + s.transpose()) * from_f64::<T>(0.5)
    }
}

pub fn sample_params<T: RealField + Copy>(g: &MixedGraph, rng_seed: u64) -> ParamRealization<T> {
    ParamRealization::sample(g, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

pub fn implied_cov<T: RealField + Copy>(p: &ParamRealization<T>) -> DMatrix<T> {
    p.implied_cov()
}

/// A coordinate of the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coord {
    Coef(Edge),
    ErrVar(usize),
    ErrCov(usize, usize),
}

/// Free parameters: unknown coefficients, error variances, confounding
/// covariances.
pub fn free_coordinates(g: &MixedGraph, known: &BTreeSet<Edge>) -> Vec<Coord> {
    let mut out: Vec<Coord> = g
        .directed()
        .iter()
        .filter(|e| !known.contains(e))
        .map(|e| Coord::Coef(*e))
        .collect();
    out.extend((0..g.n_nodes()).map(Coord::ErrVar));
    out.extend(g.bidirected().iter().map(|(a, b)| Coord::ErrCov(a.index(), b.index())));
    out
}

fn vech<T: RealField + Copy>(s: &DMatrix<T>) -> Vec<T> {
    let n = s.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        for c in r..n {
            out.push(s[(r, c)]);
        }
    }
    out
}

fn perturbed<T: RealField + Copy>(p: &ParamRealization<T>, c: Coord, h: T) -> ParamRealization<T> {
    let mut q = p.clone();
    match c {
        Coord::Coef(e) => q.b[(e.from.index(), e.to.index())] += h,
        Coord::ErrVar(v) => q.omega[(v, v)] += h,
        Coord::ErrCov(a, b) => {
            q.omega[(a, b)] += h;
            q.omega[(b, a)] += h;
        }
    }
    q
}

/// Analytic Jacobian of `vech(Σ)` with respect to `coords`, using
/// `∂A/∂B_ji = A E_ji A`.
pub fn jacobian_analytic<T: RealField + Copy>(p: &ParamRealization<T>, coords: &[Coord]) -> DMatrix<T> {
    let n = p.n();
    let a = p.total_effects();
    let at = a.transpose();
    let oa = &p.omega * &a;
    let mut jac = DMatrix::<T>::zeros(n * (n + 1) / 2, coords.len());
    for (k, c) in coords.iter().enumerate() {
        let d = match *c {
            Coord::Coef(e) => {
                // dA = A[:, j] A[i, :]
                let da = a.column(e.from.index()) * a.row(e.to.index());
                let half = da.transpose() * &oa;
                &half + half.transpose()
            }
            Coord::ErrVar(v) => at.column(v) * a.row(v),
            Coord::ErrCov(u, v) => {
                let half = at.column(u) * a.row(v);
                &half + half.transpose()
            }
        };
        for (r, x) in vech(&d).into_iter().enumerate() {
            jac[(r, k)] = x;
        }
    }
    jac
}

/// Central-difference Jacobian.
pub fn jacobian_fd<T: RealField + Copy>(p: &ParamRealization<T>, coords: &[Coord], step: T) -> DMatrix<T> {
    let n = p.n();
    let mut jac = DMatrix::<T>::zeros(n * (n + 1) / 2, coords.len());
    let two_h = step + step;
    for (k, c) in coords.iter().enumerate() {
        let hi = vech(&perturbed(p, *c, step).implied_cov());
        let lo = vech(&perturbed(p, *c, -step).implied_cov());
        for r in 0..hi.len() {
            jac[(r, k)] = (hi[r] - lo[r]) / two_h;
        }
    }
    jac
}

/// Orthonormal basis of the numerical null space, one column per vector.
/// Singular values at most `max(rows, cols) · σ₁ · rtol` count as zero.
pub fn null_space<T: RealField + Copy>(jac: &DMatrix<T>, rtol: T) -> DMatrix<T> {
    let (m, p) = jac.shape();
    if p == 0 {
        return DMatrix::zeros(0, 0);
    }
    let rows = m.max(p);
    let mut padded = DMatrix::<T>::zeros(rows, p);
    padded.view_mut((0, 0), (m, p)).copy_from(jac);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let s = &svd.singular_values;
    let s1 = s.iter().fold(T::zero(), |acc, x| acc.max(*x));
    let thr = from_f64::<T>(rows as f64) * s1 * rtol;
    let idx: Vec<usize> = (0..s.len()).filter(|&k| s[k] <= thr).collect();
    let mut out = DMatrix::<T>::zeros(p, idx.len());
    for (c, &k) in idx.iter().enumerate() {
        out.set_column(c, &vt.row(k).transpose());
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum JacobianMethod {
    Analytic,
    CentralDifference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub trials: usize,
    pub fd_step: f64,
    pub tol: f64,
    pub rank_rtol: f64,
    pub method: JacobianMethod,
    pub rng_seed: u64,
    pub max_retries: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            trials: 50,
            fd_step: 1e-7,
            tol: 1e-8,
            rank_rtol: 1e-10,
            method: JacobianMethod::Analytic,
            rng_seed: 0,
            max_retries: 20,
        }
    }
}

impl OracleConfig {
    pub fn with_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn with_trials(mut self, trials: usize) -> Self {
        self.trials = trials;
        self
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    rng
}

fn well_conditioned<T: RealField + Copy>(p: &ParamRealization<T>) -> bool {
    let s = p.implied_cov();
    let sv = s.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    lo > T::zero() && hi / lo < from_f64(1e10)
}

/// Per-edge verdicts for every free coefficient of `g`, coefficients in
/// `known` held fixed. One null space per trial serves all edges.
pub fn oracle_edges_in<T: RealField + Copy>(
    g: &MixedGraph,
    known: &BTreeSet<Edge>,
    cfg: &OracleConfig,
) -> Result<BTreeMap<Edge, bool>, OracleError> {
    let coords = free_coordinates(g, known);
    let mut verdict: BTreeMap<Edge, bool> = g.directed().iter().map(|e| (*e, true)).collect();
    let tol: T = from_f64(cfg.tol);
    for trial in 0..cfg.trials {
        let mut rng = trial_rng(cfg.rng_seed, trial);
        let mut draws = 0;
        let p = loop {
            let p = ParamRealization::<T>::sample(g, &mut rng);
            if well_conditioned(&p) {
                break p;
            }
            draws += 1;
            if draws > cfg.max_retries {
                return Err(OracleError::DegenerateRealization(draws));
            }
        };
        let jac = match cfg.method {
            JacobianMethod::Analytic => jacobian_analytic(&p, &coords),
            JacobianMethod::CentralDifference => jacobian_fd(&p, &coords, from_f64(cfg.fd_step)),
        };
        let ns = null_space(&jac, from_f64(cfg.rank_rtol));
        for (k, c) in coords.iter().enumerate() {
            if let Coord::Coef(e) = c {
                if ns.ncols() > 0 && ns.row(k).norm() > tol {
                    verdict.insert(*e, false);
                }
            }
        }
    }
    Ok(verdict)
}

/// f64 verdicts for all edges.
pub fn oracle_edges(
    g: &MixedGraph,
    known: &BTreeSet<Edge>,
    cfg: &OracleConfig,
) -> Result<BTreeMap<Edge, bool>, OracleError> {
    oracle_edges_in::<f64>(g, known, cfg)
}

/// Generic identifiability of one edge coefficient.
pub fn oracle_identifiable(g: &MixedGraph, edge: Edge, cfg: &OracleConfig) -> Result<bool, OracleError> {
    oracle_identifiable_given(g, edge, &BTreeSet::new(), cfg)
}

/// As [`oracle_identifiable`] with the coefficients in `known` treated as
/// given.
pub fn oracle_identifiable_given(
    g: &MixedGraph,
    edge: Edge,
    known: &BTreeSet<Edge>,
    cfg: &OracleConfig,
) -> Result<bool, OracleError> {
    if !g.has_edge(edge.from, edge.to) {
        return Err(OracleError::EdgeNotInGraph(edge));
    }
    if known.contains(&edge) {
        return Ok(true);
    }
    Ok(oracle_edges(g, known, cfg)?[&edge])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeComparison {
    pub edge: Edge,
    pub status: EdgeStatus,
    pub oracle: bool,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<EdgeComparison>,
}

impl AgreementReport {
    pub fn disagreements(&self) -> impl Iterator<Item = &EdgeComparison> {
        self.rows.iter().filter(|r| !r.agree)
    }

    pub fn n_disagreements(&self) -> usize {
        self.disagreements().count()
    }
}

/// Compares closure labels against the oracle: Identified must be oracle-true,
/// NonIdentifiable oracle-false; Inconclusive always agrees. Seed coefficients
/// are conditioned on.
pub fn oracle_agrees_with_closure(
    g: &MixedGraph,
    seed: &SeedSet,
    cfg: &OracleConfig,
) -> Result<AgreementReport, OracleError> {
    let res = iic_close(&ClosureRequest::new(g.clone(), seed.clone()));
    let oracle = oracle_edges(g, &seed.edge_set(), cfg)?;
    let rows = res
        .status
        .iter()
        .map(|(e, s)| {
            let o = oracle[e];
            let agree = match s {
                EdgeStatus::Identified => o,
                EdgeStatus::NonIdentifiable => !o,
                EdgeStatus::Inconclusive => true,
            };
            EdgeComparison {
                edge: *e,
                status: *s,
                oracle: o,
                agree,
            }
        })
        .collect();
    Ok(AgreementReport { rows })
}

pub fn oracle_agrees_with_htc(g: &MixedGraph, cfg: &OracleConfig) -> Result<AgreementReport, OracleError> {
    oracle_agrees_with_closure(g, &SeedSet::empty(), cfg)
}

/// Oracle verdicts for many graphs in parallel.
pub fn oracle_batch(
    graphs: &[(MixedGraph, BTreeSet<Edge>)],
    cfg: &OracleConfig,
) -> Vec<Result<BTreeMap<Edge, bool>, OracleError>> {
    graphs
        .par_iter()
        .map(|(g, known)| oracle_edges(g, known, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(confounded: bool) -> MixedGraph {
        let bi: Vec<(usize, usize)> = if confounded { vec![(0, 1)] } else { vec![] };
        MixedGraph::new(2, [(0, 1)], bi).unwrap()
    }

    #[test]
    fn two_node_covariance() {
        let mut p = ParamRealization::<f64> {
            b: DMatrix::zeros(2, 2),
            omega: DMatrix::identity(2, 2),
        };
        p.b[(0, 1)] = 0.8;
        let s = p.implied_cov();
        assert!((s[(1, 1)] - 1.64).abs() < 1e-12);
        assert!((s[(0, 1)] - 0.8).abs() < 1e-12);
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_coefficient_is_identifiable() {
        let cfg = OracleConfig::default().with_trials(10);
        assert!(oracle_identifiable(&pair(false), Edge::new(0, 1), &cfg).unwrap());
        assert!(!oracle_identifiable(&pair(true), Edge::new(0, 1), &cfg).unwrap());
    }

    #[test]
    fn known_coefficient_short_circuits() {
        let cfg = OracleConfig::default().with_trials(3);
        let known: BTreeSet<Edge> = [Edge::new(0, 1)].into_iter().collect();
        assert!(oracle_identifiable_given(&pair(true), Edge::new(0, 1), &known, &cfg).unwrap());
        assert!(oracle_identifiable(&pair(true), Edge::new(1, 0), &cfg).is_err());
    }

    #[test]
    fn f32_oracle_on_trivial_pair() {
        let cfg = OracleConfig {
            trials: 5,
            tol: 1e-3,
            rank_rtol: 1e-5,
            ..OracleConfig::default()
        };
        let v = oracle_edges_in::<f32>(&pair(true), &BTreeSet::new(), &cfg).unwrap();
        assert!(!v[&Edge::new(0, 1)]);
        let v = oracle_edges_in::<f32>(&pair(false), &BTreeSet::new(), &cfg).unwrap();
        assert!(v[&Edge::new(0, 1)]);
    }
}
