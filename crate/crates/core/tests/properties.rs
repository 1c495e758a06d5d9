mod common;

use proptest::prelude::*;

use common::*;
use thbbpx_core::bpx::{Bpx, Decomposition, DecompositionKind, SmootherKind};
use thbbpx_core::mesh::AdmissibilityClass;
use thbbpx_core::space::{BasisKind, HierarchicalSpace};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 12,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn thb_partition_of_unity(p in 1usize..=3, n in 2usize..=4, levels in 1usize..=3, seed: u64) {
        let s = HierarchicalSpace::new(random_mesh(p, n, levels, 0.4, seed), BasisKind::Thb).unwrap();
        prop_assert!(partition_of_unity(&s, 200, seed) < 1e-12);
    }

    #[test]
    fn subdivision_preserves_the_spline(p in 1usize..=4, n in 1usize..=5, seed: u64) {
        prop_assert!(subdivision_commutation(p, n, seed) < 1e-12);
    }

    #[test]
    fn hb_and_thb_span_the_same_space(p in 1usize..=3, n in 2usize..=4, seed: u64) {
        prop_assert!(hb_thb_span(&random_mesh(p, n, 3, 0.4, seed)) < 1e-10);
    }

    #[test]
    fn quasi_interpolant_reproduces_the_space(p in 1usize..=3, n in 2usize..=4, levels in 1usize..=3, seed: u64) {
        let s = HierarchicalSpace::new(random_mesh(p, n, levels, 0.4, seed), BasisKind::Thb).unwrap();
        prop_assert!(qi_projector(&s, seed) < 1e-10);
    }

    #[test]
    fn level_matrices_match_direct_assembly(p in 1usize..=3, n in 3usize..=4, seed: u64, k in 0usize..5) {
        let kind = DecompositionKind::ALL[k];
        let s = HierarchicalSpace::new(random_mesh(p, n, 3, 0.4, seed), kind.basis()).unwrap();
        prop_assert!(embedding_vs_direct(&s, kind) < 1e-10);
    }

    #[test]
    fn decompositions_are_nested_by_construction(p in 1usize..=3, n in 3usize..=4, seed: u64) {
        let [new_mod, mod_t, _, h_all, t_all] = nestedness(&random_mesh(p, n, 3, 0.4, seed));
        prop_assert!(new_mod < 1e-10 && mod_t < 1e-10 && h_all < 1e-10 && t_all < 1e-10);
    }

    #[test]
    fn tsupp_lies_in_hsupp_on_class_two_meshes(p in 1usize..=3, n in 3usize..=4, seed: u64, h: bool) {
        let class: AdmissibilityClass = if h { "H:2" } else { "T:2" }.parse().unwrap();
        let r = nestedness(&random_admissible_mesh(p, n, 4, 0.4, class, seed));
        prop_assert!(r.iter().all(|&v| v < 1e-10), "{r:?}");
    }

    #[test]
    fn bpx_is_symmetric_positive(p in 1usize..=3, n in 3usize..=5, seed: u64, k in 0usize..5, sgs: bool) {
        let kind = DecompositionKind::ALL[k];
        let s = HierarchicalSpace::new(random_mesh(p, n, 3, 0.4, seed), kind.basis()).unwrap();
        let a = thbbpx_core::bench::stiffness(&s, &thbbpx_core::geometry::GeometryMap::identity(2)).unwrap();
        prop_assume!(a.nrows() > 0);
        let smoother = if sgs { SmootherKind::Sgs } else { SmootherKind::Jacobi };
        let bpx = Bpx::new(Decomposition::build(&s, kind).unwrap(), &a, smoother).unwrap();
        let (defect, rq) = bpx_symmetry_positivity(&bpx, a.nrows(), seed);
        prop_assert!(defect < 1e-12);
        prop_assert!(rq > 0.0);
    }

    #[test]
    fn interior_functions_vanish_on_the_boundary(p in 1usize..=3, n in 2usize..=4, seed: u64, hb: bool) {
        let kind = if hb { BasisKind::Hb } else { BasisKind::Thb };
        let s = HierarchicalSpace::new(random_mesh(p, n, 3, 0.5, seed), kind).unwrap();
        prop_assert!(boundary_trace(&s, 200, seed) < 1e-12);
    }

    #[test]
    fn assembly_ignores_element_order(p in 1usize..=3, n in 2usize..=4, seed: u64) {
        let s = HierarchicalSpace::new(random_mesh(p, n, 3, 0.4, seed), BasisKind::Thb).unwrap();
        prop_assert!(assembly_order_defect(&s, seed) < 1e-13);
    }

    #[test]
    fn meshes_survive_text_round_trip(p in 1usize..=3, n in 1usize..=4, levels in 1usize..=4, seed: u64) {
        prop_assert!(mesh_round_trip(&random_mesh(p, n, levels, 0.5, seed)));
    }
}

#[test]
fn tsupp_can_leave_hsupp_on_class_three_meshes() {
    let class: AdmissibilityClass = "T:3".parse().unwrap();
    let r = nestedness(&random_admissible_mesh(1, 3, 4, 0.4, class, 1));
    assert!(r[2] > 0.1, "{r:?}");
}

#[test]
fn scaled_mass_spectrum_is_stable_across_levels() {
    for p in 1..=3 {
        for (family, drift, r) in drift_over_levels(p, |s| scaled_mass_ratio(s, DecompositionKind::Tsupp)) {
            assert!(drift <= 0.10, "p={p} {family} ratios {r:?}");
        }
    }
}

#[test]
fn jacobi_smoothing_bounds_are_level_independent() {
    for p in 1..=3 {
        for kind in [DecompositionKind::Tsupp, DecompositionKind::Mod, DecompositionKind::New] {
            for (family, drift, r) in drift_over_levels(p, |s| jacobi_smoothing_ratio(s, kind)) {
                assert!(drift < 0.20, "p={p} {} {family} ratios {r:?}", kind.name());
            }
        }
    }
}

#[test]
fn manufactured_solution_converges_at_optimal_rates() {
    for p in 1..=3 {
        let (h1, l2) = convergence_rates(p, 4, 3);
        for r in &h1 {
            assert!((r - p as f64).abs() <= 0.2, "p={p} H1 rates {h1:?}");
        }
        let last = *l2.last().unwrap();
        assert!((last - (p + 1) as f64).abs() <= 0.2, "p={p} L2 rates {l2:?}");
    }
}

#[test]
fn csv_output_is_thread_count_independent() {
    assert_eq!(csv_with_threads(1), csv_with_threads(3));
}
