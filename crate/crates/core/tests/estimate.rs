use std::collections::BTreeSet;

use iic::estimate::fixtures::{five_node, six_node};
use iic::estimate::{
    error_propagation_report, estimate_from_moments, iic_estimate, naive_iv_ratio, ols_baseline, simulate_data,
    tsls_baseline, Dataset, EstimateConfig, EstimateError, Moments,
};
use iic::graph::{NodeId, NodeSet};
use iic::seeds::{resolve_seeds, IvTriple};
use iic::{iic_close, ClosureRequest, Edge, MixedGraph, SeedSpec};
use nalgebra::DMatrix;

fn population_estimate(
    g: &MixedGraph,
    p: &iic::Params,
    spec: &SeedSpec,
    regimes: &NodeSet,
) -> iic::estimate::PointEstimate {
    let seeds = resolve_seeds(g, spec).unwrap();
    let closure = iic_close(&ClosureRequest::new(g.clone(), seeds.clone()));
    estimate_from_moments(g, &closure, &seeds, spec, &Moments::population(p, regimes), 1e8)
}

#[test]
fn five_node_population_recovery() {
    let (g, p, spec) = five_node();
    let r = population_estimate(&g, &p, &spec, &NodeSet::new());
    let got: BTreeSet<Edge> = r.estimates.keys().copied().collect();
    let want: BTreeSet<Edge> = [Edge::new(0, 1), Edge::new(1, 2), Edge::new(3, 1)].into();
    assert_eq!(got, want);
    for (e, v) in &r.estimates {
        assert!((v - p.b[(e.from.index(), e.to.index())]).abs() < 1e-10, "{e}: {v}");
    }
}

#[test]
fn six_node_population_recovery() {
    let (g, p, spec) = six_node();
    let r = population_estimate(&g, &p, &spec, &NodeSet::new());
    assert_eq!(r.estimates.len(), 5);
    for (e, v) in &r.estimates {
        assert!((v - p.b[(e.from.index(), e.to.index())]).abs() < 1e-10, "{e}: {v}");
    }
    assert!(r.unestimated.is_empty());
}

#[test]
fn intervention_regime_gives_exact_seed() {
    let g = MixedGraph::new(3, [(0, 1), (1, 2)], [(1, 2), (0, 1)]).unwrap();
    let mut p = iic::Params {
        b: DMatrix::zeros(3, 3),
        omega: DMatrix::identity(3, 3),
    };
    p.b[(0, 1)] = 0.9;
    p.b[(1, 2)] = -0.4;
    p.omega[(1, 2)] = 0.5;
    p.omega[(2, 1)] = 0.5;
    p.omega[(0, 1)] = 0.3;
    p.omega[(1, 0)] = 0.3;
    let spec = SeedSpec::default().with_intervened(NodeId(1));
    let r = population_estimate(&g, &p, &spec, &[NodeId(1)].into());
    assert!((r.estimates[&Edge::new(1, 2)] + 0.4).abs() < 1e-10);
}

#[test]
fn bootstrap_is_reproducible_and_covers_truth() {
    let (g, p, spec) = six_node();
    let data = simulate_data(&p, 20_000, 5, None);
    let cfg = EstimateConfig {
        n_boot: 100,
        rng_seed: 9,
        ..EstimateConfig::default()
    };
    let a = iic_estimate(&g, &data, &spec, &cfg).unwrap();
    let b = iic_estimate(&g, &data, &spec, &cfg).unwrap();
    assert_eq!(a, b);
    for (e, (lo, hi)) in &a.ci {
        let truth = p.b[(e.from.index(), e.to.index())];
        assert!(a.se[e] > 0.0 && a.se[e] < 0.1, "{e}");
        assert!(
            lo - 3.0 * a.se[e] < truth && truth < hi + 3.0 * a.se[e],
            "{e}: {truth} not near [{lo}, {hi}]"
        );
    }
}

#[test]
fn baselines_on_six_node() {
    let (g, p, _) = six_node();
    let data = simulate_data(&p, 50_000, 11, None);
    let ols = ols_baseline(&g, &data).unwrap();
    // T <-> Y with positive covariance inflates the regression of Y on T
    assert!(ols[&Edge::new(1, 2)] - 0.7 > 0.1);
    let tsls = tsls_baseline(&g, &data, IvTriple::new(0, 1, 2)).unwrap().unwrap();
    assert!((tsls - 0.7).abs() < 0.05);
    assert!((naive_iv_ratio(&data, IvTriple::new(0, 1, 2)).unwrap() - tsls).abs() < 1e-12);
    assert_eq!(
        tsls_baseline(&g, &data, IvTriple::new(5, 4, 2))
            .unwrap()
            .map(|v| v.is_finite()),
        Some(true)
    );
    assert_eq!(tsls_baseline(&g, &data, IvTriple::new(3, 1, 2)).unwrap(), None);
}

#[test]
fn error_bound_is_at_least_one() {
    let (g, p, spec) = five_node();
    let data = simulate_data(&p, 5_000, 1, None);
    let r = iic_estimate(
        &g,
        &data,
        &spec,
        &EstimateConfig {
            n_boot: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let rep = error_propagation_report(&r);
    assert!(rep.c_d >= rep.c0);
    assert_eq!(rep.steps, r.diagnostics);
}

#[test]
fn input_errors() {
    let (g, p, spec) = six_node();
    let small = simulate_data(&p, 5, 0, None);
    assert!(matches!(
        iic_estimate(&g, &small, &spec, &EstimateConfig::default()),
        Err(EstimateError::TooFewSamples { .. })
    ));
    let wrong = Dataset::observational(DMatrix::zeros(100, 3));
    assert!(matches!(
        iic_estimate(&g, &wrong, &spec, &EstimateConfig::default()),
        Err(EstimateError::ShapeMismatch { need: 6, got: 3 })
    ));
    let data = simulate_data(&p, 100, 0, None);
    let spec = SeedSpec::default().with_intervened(NodeId(4));
    assert!(matches!(
        iic_estimate(&g, &data, &spec, &EstimateConfig::default()),
        Err(EstimateError::MissingRegimeData(NodeId(4)))
    ));
}
