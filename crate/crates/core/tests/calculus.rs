use nabla_calc::calculus::{divergence_field, divergence_on_grid};
use nabla_calc::checks::{self, random_covering};
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, VectorField};
use proptest::prelude::*;
use std::sync::Arc;

fn flat(points: usize, interior: bool) -> Arc<Chart> {
    let mut g = ChartGrid::cube(2, -1.0, 1.0, points).unwrap();
    if interior {
        g = g.with_support_tol(None);
    }
    Chart::euclidean(g).unwrap()
}

#[test]
fn leibniz_and_curvature_on_the_magnetic_bundle() {
    let c = flat(97, true);
    let e = c.bundle(&BundleSpec::magnetic_example()).unwrap();
    let l = checks::leibniz(&c, &e, 4, 1, 5e-5).unwrap();
    let k = checks::curvature_commutator(&c, &e, 4, 1, 5e-5).unwrap();
    assert!(l.passed && k.passed, "{l:?} {k:?}");
}

#[test]
fn adjoint_pairing_for_compact_pairs() {
    let c = flat(129, false);
    let e = c.bundle(&BundleSpec::magnetic_example()).unwrap();
    let o = checks::adjoint_pairing(&c, &e, 4, 2, 1e-5).unwrap();
    assert!(o.passed, "{o:?}");
}

#[test]
fn divergence_of_the_position_field_is_two() {
    let c = flat(33, true);
    let x = VectorField::new(2, |p| p.to_vec());
    let grid = divergence_on_grid(&c, &x).unwrap();
    let exact = divergence_field(&c, &x).unwrap();
    let r = c.grid().fd_order().radius();
    for p in 0..c.npts() {
        assert!((exact[p] - 2.0).abs() < 1e-8);
        if c.grid().depth(p) >= r {
            assert!((grid[p] - 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn sphere_divergence_matches_closed_form() {
    // X = d/dx1 scaled by x1 on g = c I with c = 4 / (1 + |x|^2)^2:
    // div X = 1 - 4 x1^2 / (1 + |x|^2).
    let c = Chart::new(ChartGrid::cube(2, -1.0, 1.0, 129).unwrap().with_support_tol(None), MetricField::stereographic_sphere()).unwrap();
    let x = VectorField::new(2, |p| vec![p[0], 0.0]);
    let exact = divergence_field(&c, &x).unwrap();
    let grid = divergence_on_grid(&c, &x).unwrap();
    for p in 0..c.npts() {
        let q = c.grid().coords(p);
        let want = 1.0 - 4.0 * q[0] * q[0] / (1.0 + q[0] * q[0] + q[1] * q[1]);
        assert!((exact[p] - want).abs() < 1e-8, "{} {want}", exact[p]);
        if c.grid().depth(p) >= 2 {
            assert!((grid[p] - want).abs() < 1e-6, "{} {want}", grid[p]);
        }
    }
}

#[test]
fn covering_of_multiplicity_four_comes_in_both_shapes() {
    let (mut strips, mut products) = (0, 0);
    for t in 0..20 {
        let cov = random_covering(&[-1.0, -1.0], &[1.0, 1.0], 4, 5, t);
        assert_eq!(cov.multiplicity(), 4);
        assert_eq!(cov.sets.len(), 4);
        // Strips span the whole box along one axis; product boxes along none.
        let spans = |a: usize| cov.sets.iter().all(|s| s.lower[a] == -1.0 && s.upper[a] == 1.0);
        if spans(0) || spans(1) {
            strips += 1;
        } else {
            products += 1;
        }
    }
    assert!(strips > 0 && products > 0, "{strips} {products}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_coverings_have_the_requested_multiplicity(seed in 0u64..10_000, target in 1usize..=4) {
        let cov = random_covering(&[-1.0, -0.5], &[1.0, 2.0], target, seed, 0);
        prop_assert_eq!(cov.multiplicity(), target);
        for s in &cov.sets {
            prop_assert!(s.lower[0] >= -1.0 && s.upper[0] <= 1.0);
            prop_assert!(s.lower[1] >= -0.5 && s.upper[1] <= 2.0);
        }
    }

    #[test]
    fn covering_bounds_hold_for_random_sections(seed in 0u64..10_000) {
        let c = flat(33, false);
        let e = c.bundle(&BundleSpec::magnetic_example()).unwrap();
        let o = checks::covering_bounds(&c, &e, 4, seed, 1e-10).unwrap();
        prop_assert!(o.passed, "{:?}", o);
    }

    #[test]
    fn leibniz_residual_stays_at_discretization_level(seed in 0u64..10_000) {
        let c = flat(65, true);
        let e = c.bundle(&BundleSpec::magnetic_example()).unwrap();
        let o = checks::leibniz(&c, &e, 1, seed, 5e-4).unwrap();
        prop_assert!(o.passed, "{:?}", o);
    }
}
