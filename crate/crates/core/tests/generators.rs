use nabla_calc::calculus::divergence_field;
use nabla_calc::generators::*;
use nabla_calc::norms::{sobolev_norm, Exponent};
use nabla_calc::samples::{trial_rng, BumpSum};
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, Section, VectorField};
use rand::Rng;
use std::sync::Arc;

fn sphere_chart(points: usize) -> Arc<Chart> {
    Chart::new(ChartGrid::cube(2, -1.0, 1.0, points).unwrap(), MetricField::stereographic_sphere()).unwrap()
}

fn random_setup(seed: u64, points: usize) -> (Arc<Chart>, GeneratorSystem) {
    let emb = EmbeddingSpec::random(&mut trial_rng(seed, 0), 2, 4).with_isometric(true);
    let chart = Chart::new(ChartGrid::cube(2, -1.0, 1.0, points).unwrap(), emb.induced_metric()).unwrap();
    let gens = build_generators(&chart, &emb).unwrap();
    (chart, gens)
}

fn random_field(seed: u64) -> VectorField {
    let mut rng = trial_rng(seed, 1);
    let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    VectorField::new(2, move |x| {
        vec![c[0] + c[1] * (x[0] + c[2] * x[1]).sin(), c[3] * x[0] * x[1] + c[4] * (c[5] * x[0]).cos()]
    })
}

#[test]
fn sphere_generators_are_tangential_projections() {
    let chart = sphere_chart(33);
    let emb = EmbeddingSpec::sphere_ambient();
    assert!(emb.isometry_defect(&chart) < 1e-9);
    let gens = build_generators(&chart, &emb).unwrap();
    assert!(gens.left_inverse_residual() <= 1e-12);
    // Phi Z_j = e_j - (e_j . iota) iota.
    for p in [0, 100, 500, 1088] {
        let x = chart.grid().coords(p);
        let r2 = x[0] * x[0] + x[1] * x[1];
        let iota = [2.0 * x[0] / (1.0 + r2), 2.0 * x[1] / (1.0 + r2), (r2 - 1.0) / (1.0 + r2)];
        let phi = emb.at(&x);
        for j in 0..3 {
            let z = gens.z_at(p, j);
            for a in 0..3 {
                let push = phi[(a, 0)] * z[0] + phi[(a, 1)] * z[1];
                let want = if a == j { 1.0 } else { 0.0 } - iota[j] * iota[a];
                assert!((push - want).abs() < 1e-9, "{push} {want}");
            }
        }
    }
}

#[test]
fn reconstruction_identities() {
    let chart = sphere_chart(33);
    let sphere = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    for seed in 0..3 {
        let (_, random) = random_setup(seed, 17);
        assert!(random.left_inverse_residual() <= 1e-12);
        for t in 0..10 {
            let x = random_field(100 * seed + t);
            for g in [&sphere, &random] {
                assert!(g.vector_reconstruction_residual(&x) <= 1e-12);
                assert!(g.covector_reconstruction_residual(&x) <= 1e-12);
            }
        }
    }
}

#[test]
fn polar_isometrize_matches_metric() {
    let emb = EmbeddingSpec::random(&mut trial_rng(3, 0), 2, 3);
    let g = MetricField::stereographic_sphere();
    let chart = sphere_chart(17);
    let iso = polar_isometrize(&emb, &g);
    assert!(iso.isometry_defect(&chart) <= 1e-10);
    let again = polar_isometrize(&iso, &g);
    let x = [0.2, -0.4];
    assert!((again.at(&x) - iso.at(&x)).abs().max() <= 1e-12);
}

#[test]
fn two_route_nabla_sphere_and_random() {
    let chart = sphere_chart(65);
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    let b = BumpSum::random(&mut trial_rng(8, 0), 2, 1, 2, (-0.2, 0.2), (0.1, 0.13));
    let u = Section::of_bundle(&chart, &chart.line(), |x| b.value(x)).unwrap();
    let du = u.nabla().unwrap();
    let viag = nabla_via_generators(&u, &gens).unwrap();
    assert!(du.sub(&viag).unwrap().max_abs() <= 1e-12 * du.max_abs());
    // A rank-one field on the sphere: Christoffel terms are active.
    let du2 = du.nabla().unwrap();
    let viag2 = nabla_via_generators(&du, &gens).unwrap();
    assert!(du2.sub(&viag2).unwrap().max_abs() <= 1e-12 * du2.max_abs());

    let (rchart, rgens) = random_setup(4, 65);
    let bundle = rchart.bundle(&BundleSpec::magnetic_example()).unwrap();
    let b = BumpSum::random(&mut trial_rng(8, 1), 2, 2, 2, (-0.2, 0.2), (0.1, 0.13));
    let u = Section::of_bundle(&rchart, &bundle, |x| b.value(x)).unwrap();
    let du = u.nabla().unwrap();
    let viag = nabla_via_generators(&u, &rgens).unwrap();
    assert!(du.sub(&viag).unwrap().max_abs() <= 1e-12 * du.max_abs());
}

#[test]
fn two_route_divergence() {
    let chart = sphere_chart(17);
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    // Rotation about the polar axis is Killing: x -> (-x2, x1) in the chart.
    let rot = VectorField::new(2, |x| vec![-x[1], x[0]]);
    let d = divergence_via_generators(&rot, &gens).unwrap();
    assert!(d.iter().all(|v| v.abs() < 1e-9), "{:?}", d.iter().cloned().fold(0.0, f64::max));
    for seed in 0..3 {
        let x = random_field(seed);
        let a = divergence_via_generators(&x, &gens).unwrap();
        let b = divergence_field(&chart, &x).unwrap();
        for p in 0..chart.npts() {
            let c = divergence_density(&x, chart.metric(), &chart.grid().coords(p)).unwrap();
            assert!((a[p] - b[p]).abs() <= 1e-9 * (1.0 + b[p].abs()));
            assert!((c - b[p]).abs() <= 1e-8 * (1.0 + b[p].abs()), "{c} {}", b[p]);
        }
    }
    let (rchart, rgens) = random_setup(2, 17);
    let x = random_field(9);
    let a = divergence_via_generators(&x, &rgens).unwrap();
    let b = divergence_field(&rchart, &x).unwrap();
    for p in 0..rchart.npts() {
        assert!((a[p] - b[p]).abs() <= 1e-9 * (1.0 + b[p].abs()));
    }
}

#[test]
fn structure_functions_expand_and_are_torsion_consistent() {
    let chart = sphere_chart(17);
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    let sf = structure_functions(&gens).unwrap();
    assert!(sf.expansion_residual <= 1e-12);
    // Torsion-free: xi_k(nabla_{Z_i} Z_j - nabla_{Z_j} Z_i) = xi_k([Z_i, Z_j]).
    for p in 0..chart.npts() {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let lhs = sf.g_at(p, i, j, k) - sf.g_at(p, j, i, k);
                    assert!((lhs - sf.l_at(p, i, j, k)).abs() <= 1e-8, "{lhs} {}", sf.l_at(p, i, j, k));
                }
            }
        }
    }
}

#[test]
fn decomposition_reassembles() {
    let chart = sphere_chart(33);
    let gens = build_generators(&chart, &EmbeddingSpec::sphere_ambient()).unwrap();
    let b = BumpSum::random(&mut trial_rng(1, 0), 2, 1, 2, (-0.2, 0.2), (0.1, 0.13));
    let u = Section::of_bundle(&chart, &chart.line(), |x| b.value(x)).unwrap();
    let w1 = u.nabla().unwrap();
    let w2 = w1.nabla().unwrap();
    for w in [&w1, &w2] {
        let parts = decompose_tensor(w, &gens).unwrap();
        assert_eq!(parts.len(), 3usize.pow(w.lower() as u32));
        let back = reassemble_tensor(&parts, &gens).unwrap();
        assert!(back.sub(w).unwrap().max_abs() <= 1e-10 * w.max_abs());
    }
    let (rchart, rgens) = random_setup(6, 33);
    let u = Section::of_bundle(&rchart, &rchart.line(), |x| b.value(x)).unwrap();
    let w = u.nabla_iter(2).unwrap();
    let back = reassemble_tensor(&decompose_tensor(&w, &rgens).unwrap(), &rgens).unwrap();
    assert!(back.sub(&w).unwrap().max_abs() <= 1e-10 * w.max_abs());
}

#[test]
fn generator_norms() {
    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 65).unwrap()).unwrap();
    let id = build_generators(&chart, &EmbeddingSpec::identity(2)).unwrap();
    let b = BumpSum::random(&mut trial_rng(2, 0), 2, 1, 2, (-0.2, 0.2), (0.1, 0.13));
    let u = Section::of_bundle(&chart, &chart.line(), |x| b.value(x)).unwrap();
    let p = Exponent::Finite(2.0);
    let all = generator_sobolev_norm(&u, 2, p, &id, false).unwrap();
    let direct = sobolev_norm(&u, 2, p).unwrap();
    assert!((all - direct).abs() <= 1e-12 * direct, "{all} {direct}");

    let sphere = sphere_chart(65);
    let gens = build_generators(&sphere, &EmbeddingSpec::sphere_ambient()).unwrap();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for t in 0..10 {
        let b = BumpSum::random(&mut trial_rng(30, t), 2, 1, 1, (-0.2, 0.2), (0.1, 0.13));
        let u = Section::of_bundle(&sphere, &sphere.line(), |x| b.value(x)).unwrap();
        let r = generator_sobolev_norm(&u, 1, p, &gens, true).unwrap() / sobolev_norm(&u, 1, p).unwrap();
        lo = lo.min(r);
        hi = hi.max(r);
    }
    assert!(lo > 0.3 && hi < 3.0, "{lo} {hi}");
}

#[test]
fn nonisometric_divergence_is_refused() {
    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 9).unwrap()).unwrap();
    let emb = EmbeddingSpec::random(&mut trial_rng(0, 0), 2, 3);
    let gens = build_generators(&chart, &emb).unwrap();
    assert!(divergence_via_generators(&random_field(0), &gens).is_err());
}
