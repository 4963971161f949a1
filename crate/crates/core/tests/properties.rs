mod common;

use common::*;
use iic::experiments::{item_rng, random_mixed_graph};
use proptest::prelude::*;

fn case() -> impl Strategy<Value = (u64, u64)> {
    (any::<u64>(), 0u64..1_000_000)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closure_is_monotone((root, k) in case()) {
        let (g, seed) = random_case(root, k);
        let extra = random_seed(&g, 0.3, &mut item_rng(root ^ 1, k));
        prop_assert_eq!(check_monotone(&g, &seed, &extra), Ok(()));
    }

    #[test]
    fn closure_ignores_visit_order((root, k) in case()) {
        let (g, seed) = random_case(root, k);
        prop_assert_eq!(check_order_independent(&g, &seed, 10, &mut item_rng(root ^ 2, k)), Ok(()));
    }

    #[test]
    fn seeds_compose((root, k) in case()) {
        let (g, a) = random_case(root, k);
        let b = random_seed(&g, 0.25, &mut item_rng(root ^ 3, k));
        prop_assert_eq!(check_composable(&g, &a, &b), Ok(()));
    }

    #[test]
    fn closure_subsumes_htc_and_ancestral((root, k) in case()) {
        let (g, _) = random_case(root, k);
        prop_assert_eq!(check_subsumes(&g), Ok(()));
    }

    #[test]
    fn witnesses_reverify((root, k) in case()) {
        let (g, seed) = random_case(root, k);
        prop_assert_eq!(check_witnesses(&g, &seed), Ok(()));
    }

    #[test]
    fn iterations_bounded_by_edges((root, k) in case()) {
        let (g, seed) = random_case(root, k);
        prop_assert_eq!(check_iterations(&g, &seed, g.directed().len().max(1)), Ok(()));
    }

    #[test]
    fn graph_json_roundtrips(n in 1usize..8, pd in 0.0f64..1.0, pb in 0.0f64..1.0, s in any::<u64>()) {
        let g = random_mixed_graph(n, pd, pb, &mut item_rng(s, 0));
        let back = iic::MixedGraph::from_json(&g.to_json()).unwrap();
        prop_assert_eq!(back, g);
    }
}
