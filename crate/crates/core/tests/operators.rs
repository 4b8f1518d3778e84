use nabla_calc::calculus::curvature;
use nabla_calc::generators::{build_generators, EmbeddingSpec, GeneratorSystem};
use nabla_calc::norms::Exponent;
use nabla_calc::operators::*;
use nabla_calc::samples::{random_coefficient, random_section};
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, SampledBundle, Section, C64};
use std::sync::Arc;

/// Interior-only sphere chart; comparisons skip the layers reached by the
/// zero extension.
fn sphere(points: usize) -> (Arc<Chart>, Arc<SampledBundle>, GeneratorSystem) {
    let grid = ChartGrid::cube(2, -1.0, 1.0, points).unwrap().with_support_tol(None);
    let chart = Chart::new(grid, MetricField::stereographic_sphere()).unwrap();
    let e = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    (chart, e, gens)
}

fn flat(points: usize) -> (Arc<Chart>, Arc<SampledBundle>, GeneratorSystem) {
    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, points).unwrap()).unwrap();
    let e = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    let gens = build_generators(&chart, &EmbeddingSpec::identity(2)).unwrap();
    (chart, e, gens)
}

/// max |a - b| / max |b| over points away from the faces.
fn rel(a: &Section, b: &Section, depth: usize) -> f64 {
    a.sub(b).unwrap().max_abs_interior(depth) / b.max_abs_interior(depth)
}

#[test]
fn composition_matches_sequential_application() {
    let (chart, e, _) = sphere(97);
    let a = random_coefficient(&chart, 0, 0, &e, &e, 5, 0).unwrap();
    let p = compose(
        &NablaOpSpec::multiplication(&a, CoefficientClass::Smooth).unwrap(),
        &NablaOpSpec::laplacian(&chart, &e),
    )
    .unwrap();
    let q = NablaOpSpec::nabla(&chart, &e);
    let qp = compose(&q, &p).unwrap();
    assert_eq!(qp.order(), 3);
    assert_eq!(qp.slots(), (0, 1));
    assert_eq!(qp.class(), CoefficientClass::Smooth);
    for t in 0..3 {
        let u = random_section(&chart, &e, 8, t).unwrap();
        let seq = q.apply(&p.apply(&u).unwrap()).unwrap();
        let one = qp.apply(&u).unwrap();
        assert!(rel(&one, &seq, 12) < 1e-4, "{}", rel(&one, &seq, 12));
    }
}

#[test]
fn laplacian_on_flat_trivial_bundle_is_coordinate_laplacian() {
    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 65).unwrap()).unwrap();
    let e = chart.bundle(&BundleSpec::trivial(2)).unwrap();
    let u = random_section(&chart, &e, 3, 0).unwrap();
    let lap = NablaOpSpec::laplacian(&chart, &e).apply(&u).unwrap();
    let mut want = u.nabla().unwrap().slot_component(0).unwrap().nabla().unwrap().slot_component(0).unwrap();
    want = want.add(&u.nabla().unwrap().slot_component(1).unwrap().nabla().unwrap().slot_component(1).unwrap()).unwrap();
    assert!(rel(&lap, &want, 0) < 1e-12);
}

#[test]
fn mixed_to_nabla_preserves_the_map() {
    let (chart, e, gens) = sphere(97);
    for t in 0..4 {
        let m = random_mixed_spec(&gens, &e, 2, 3, 21, t).unwrap();
        let p = mixed_to_nabla(&m).unwrap();
        assert!(p.order() <= 2);
        let u = random_section(&chart, &e, 22, t).unwrap();
        assert!(rel(&p.apply(&u).unwrap(), &m.apply(&u).unwrap(), 12) < 1e-4);
    }
}

#[test]
fn round_trip_through_nabla_form_is_sorted_and_preserves_the_map() {
    let (chart, e, gens) = sphere(97);
    for t in 0..6 {
        let m = random_mixed_spec(&gens, &e, 3, 3, 40, t).unwrap();
        let p = mixed_to_nabla(&m).unwrap();
        let back = reorder_generators(&nabla_to_mixed(&p, &gens).unwrap(), &gens).unwrap();
        assert!(back.order() <= 3);
        for term in back.terms() {
            assert!(term.fields.windows(2).all(|w| w[0] <= w[1]), "{:?}", term.fields);
        }
        let u = random_section(&chart, &e, 41, t).unwrap();
        let r = rel(&back.apply(&u).unwrap(), &m.apply(&u).unwrap(), 24);
        assert!(r <= 1e-4, "trial {t}: {r}");
    }
}

#[test]
fn magnetic_swap_produces_the_curvature_term() {
    let (chart, e, gens) = flat(65);
    let mut m = MixedOpSpec::over_generators(&gens, &e, &e, CoefficientClass::TotallyBounded);
    m.push(Section::identity(&chart, &e), vec![1, 0]).unwrap();
    let sorted = reorder_generators(&m, &gens).unwrap();
    let mut fields: Vec<Vec<usize>> = sorted.terms().iter().map(|t| t.fields.clone()).collect();
    fields.sort();
    assert_eq!(fields, vec![vec![], vec![0, 1]]);
    let curv = curvature(&chart, &e);
    let r12 = curv.as_section(&chart, &e, 1, 0);
    let zero = sorted.terms().iter().find(|t| t.fields.is_empty()).unwrap();
    assert!(zero.coeff.sub(&r12).unwrap().max_abs() < 1e-12);
    // R(e_2, e_1) = -3i x^2 [[0, e], [conj e, 0]] with e = exp(i x^3).
    let p = 1000;
    let x = chart.grid().coords(p)[0];
    let ph = C64::new(0.0, x.powi(3)).exp();
    let want = [C64::new(0.0, 0.0), C64::new(0.0, -3.0 * x * x) * ph, C64::new(0.0, -3.0 * x * x) * ph.conj(), C64::new(0.0, 0.0)];
    for (g, w) in zero.coeff.at(p).iter().zip(want) {
        assert!((g - w).norm() < 1e-8, "{g} {w}");
    }
}

#[test]
fn mapping_bound_holds_for_random_operators() {
    let grid = ChartGrid::cube(2, -1.0, 1.0, 65).unwrap().with_margin(6).unwrap();
    let chart = Chart::new(grid, MetricField::stereographic_sphere()).unwrap();
    let e = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    for t in 0..2 {
        let p = mixed_to_nabla(&random_mixed_spec(&gens, &e, 2, 2, 60, t).unwrap()).unwrap();
        for k in [0, 1] {
            let rep = mapping_bound_check(&p, k, Exponent::Finite(2.0), 4, 61).unwrap();
            assert!(rep.passed, "{rep:?}");
            assert!(rep.worst_ratio > 0.0);
        }
    }
}

#[test]
fn shape_errors_are_reported() {
    let (chart, e, gens) = flat(17);
    let q = NablaOpSpec::nabla(&chart, &e);
    assert!(compose(&q, &q).is_err());
    assert!(nabla_to_mixed(&q, &gens).is_err());
    let mut m = MixedOpSpec::over_generators(&gens, &e, &e, CoefficientClass::Smooth);
    assert!(m.push(Section::identity(&chart, &e), vec![5]).is_err());
}
