use nabla_calc::norms::*;
use nabla_calc::samples::{trial_rng, BumpSum};
use nabla_calc::{BundleSpec, Chart, ChartGrid, MetricField, Section, VectorField, WeightPair, C64};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn gaussian(sigma: f64) -> impl Fn(&[f64]) -> Vec<C64> + Sync {
    move |x: &[f64]| vec![C64::new((-(x[0] * x[0] + x[1] * x[1]) / (2.0 * sigma * sigma)).exp(), 0.0)]
}

fn flat_chart(points: usize) -> Arc<Chart> {
    Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, points).unwrap()).unwrap()
}

#[test]
fn zero_section_has_zero_norms() {
    let chart = flat_chart(33);
    let u = Section::of_bundle(&chart, &chart.line(), |_| vec![C64::new(0.0, 0.0)]).unwrap();
    for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinite] {
        assert_eq!(lp_norm(&u, p).unwrap(), 0.0);
        assert_eq!(sobolev_norm(&u, 2, p).unwrap(), 0.0);
    }
}

#[test]
fn gaussian_l2_mass_matches_closed_form() {
    // int exp(-|x|^2 / s^2) dx = pi s^2 on R^2.
    let s = 0.15;
    let chart = flat_chart(129);
    let u = Section::of_bundle(&chart, &chart.line(), gaussian(s)).unwrap();
    let got = lp_norm(&u, Exponent::Finite(2.0)).unwrap();
    let want = (PI * s * s).sqrt();
    assert!((got - want).abs() <= 1e-12 * want, "{got} {want}");
}

#[test]
fn sup_norm_is_grid_max() {
    let chart = flat_chart(33);
    let u = Section::of_bundle(&chart, &chart.line(), |x| vec![C64::new(3.0, 0.0) * gaussian(0.1)(x)[0]]).unwrap();
    assert_eq!(lp_norm(&u, Exponent::Infinite).unwrap(), 3.0);
}

#[test]
fn gaussian_h1_seminorm_matches_closed_form() {
    // |grad e^{-r^2/(2s^2)}|^2 = r^2/s^4 e^{-r^2/s^2}; its integral is pi.
    let s = 0.15;
    let chart = flat_chart(129);
    let u = Section::of_bundle(&chart, &chart.line(), gaussian(s)).unwrap();
    let parts = sobolev_parts(&u, 2, Exponent::Finite(2.0)).unwrap();
    assert!((parts[1] - PI.sqrt()).abs() <= 1e-4 * PI.sqrt(), "{}", parts[1]);
    // |Hess|^2 = e^{-r^2/s^2} (2/s^4 - 2 r^2/s^6 + r^4/s^8); integral 2 pi / s^2.
    let want = (2.0 * PI / (s * s)).sqrt();
    assert!((parts[2] - want).abs() <= 1e-3 * want, "{} {want}", parts[2]);
    assert_eq!(sobolev_norm(&u, 0, Exponent::Finite(2.0)).unwrap(), parts[0]);
}

#[test]
fn magnetic_norm_agrees_with_multiindex_route() {
    let chart = flat_chart(97);
    let bundle = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    let b = BumpSum::random(&mut trial_rng(4, 0), 2, 2, 2, (-0.2, 0.2), (0.1, 0.14));
    let u = Section::of_bundle(&chart, &bundle, |x| b.value(x)).unwrap();
    let p = Exponent::Finite(2.0);
    let a = sobolev_norm(&u, 2, p).unwrap();
    let m = multiindex_sobolev_norm(&u, 2, p).unwrap();
    assert!((a - m).abs() <= 1e-13 * a, "{a} {m}");
}

#[test]
fn unit_weights_reduce_to_sobolev_norm() {
    let chart = flat_chart(65);
    let u = Section::of_bundle(&chart, &chart.line(), gaussian(0.12)).unwrap();
    let p = Exponent::Finite(2.0);
    let w = weighted_sobolev_norm(&u, 2, p, &WeightPair::unit()).unwrap();
    assert!((w - sobolev_norm(&u, 2, p).unwrap()).abs() <= 1e-14 * w);
    let half = WeightPair::new(Arc::new(|_| 1.0), Arc::new(|_| 2.0));
    let w0 = weighted_sobolev_norm(&u, 0, p, &half).unwrap();
    assert!((w0 - lp_norm(&u.scale(C64::new(0.5, 0.0)), p).unwrap()).abs() <= 1e-15);
    let bad = WeightPair::new(Arc::new(|x: &[f64]| x[0]), Arc::new(|_| 1.0));
    assert!(matches!(weighted_sobolev_norm(&u, 1, p, &bad), Err(nabla_calc::Error::NonpositiveWeight { .. })));
}

#[test]
fn covering_bounds_and_special_cases() {
    let chart = flat_chart(65);
    let b = BumpSum::random(&mut trial_rng(9, 0), 2, 1, 2, (-0.2, 0.2), (0.1, 0.13));
    let u = Section::of_bundle(&chart, &chart.line(), |x| b.value(x)).unwrap();
    let whole = Covering { sets: vec![BoxSet { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0] }] };
    let halves = Covering {
        sets: vec![
            BoxSet { lower: vec![-1.0, -1.0], upper: vec![0.5, 1.0] },
            BoxSet { lower: vec![-0.5, -1.0], upper: vec![1.0, 1.0] },
        ],
    };
    for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinite] {
        let s = sobolev_norm(&u, 1, p).unwrap();
        let one = covering_norm(&u, &whole, 1, p).unwrap();
        assert_eq!(one.multiplicity, 1);
        assert!((one.value - s).abs() <= 1e-14 * s);
        let two = covering_norm(&u, &halves, 1, p).unwrap();
        assert_eq!(two.multiplicity, 2);
        assert!(two.value >= s * (1.0 - 1e-14));
        assert!(two.value <= 2f64.powf(p.reciprocal()) * s * (1.0 + 1e-14));
        if p == Exponent::Infinite {
            assert!((two.value - s).abs() <= 1e-14 * s);
        }
    }
    let empty = Covering { sets: vec![] };
    assert!(matches!(covering_norm(&u, &empty, 0, Exponent::Finite(2.0)), Err(nabla_calc::Error::EmptyCovering)));
    let gap = Covering { sets: vec![BoxSet { lower: vec![-1.0, -1.0], upper: vec![0.0, 1.0] }] };
    assert!(matches!(covering_norm(&u, &gap, 0, Exponent::Finite(2.0)), Err(nabla_calc::Error::IncompleteCovering)));
}

fn skew_perturbation(seed: u64, scale: f64) -> impl Fn(&[f64]) -> Vec<C64> + Send + Sync + Clone + 'static {
    // B_k = i c_k cos(w . x) sigma_x-style skew matrices on C^2.
    use rand::Rng;
    let mut rng = trial_rng(seed, 77);
    let c: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
        .collect();
    move |x: &[f64]| {
        let mut out = Vec::with_capacity(8);
        for &(a, b, w1, w2) in &c {
            let ph = (w1 * x[0] + w2 * x[1]).cos() * scale;
            let z = C64::new(a * ph, b * ph);
            out.extend([C64::new(0.0, a * ph), z, -z.conj(), C64::new(0.0, -b * ph)]);
        }
        out
    }
}

#[test]
fn perturbed_norms_respect_the_certified_constant() {
    let chart = flat_chart(65);
    let bundle = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    for t in 0..5 {
        let b = BumpSum::random(&mut trial_rng(12, t), 2, 2, 2, (-0.2, 0.2), (0.1, 0.13));
        let u = Section::of_bundle(&chart, &bundle, |x| b.value(x)).unwrap();
        for l in 0..=2 {
            let r = perturbed_norm_check(&u, skew_perturbation(t, 1.5), l, 2.0).unwrap();
            assert!(r.passed, "{r:?}");
        }
        let zero = perturbed_norm_check(&u, |_: &[f64]| vec![C64::new(0.0, 0.0); 8], 2, 2.0).unwrap();
        assert_eq!(zero.ratio, 1.0);
    }
}

#[test]
fn flat_versus_magnetic_first_order_ratio() {
    let chart = flat_chart(65);
    let flat = chart.bundle(&BundleSpec::flat(2, 2)).unwrap();
    let b = BumpSum::random(&mut trial_rng(5, 0), 2, 2, 2, (-0.2, 0.2), (0.1, 0.13));
    let u = Section::of_bundle(&chart, &flat, |x| b.value(x)).unwrap();
    let mag = BundleSpec::magnetic_example();
    let r = perturbed_norm_check(&u, move |x: &[f64]| mag.potentials_at(x), 1, 2.0).unwrap();
    assert!(r.passed && r.ratio != 1.0, "{r:?}");
    assert!((r.norm_a - 2f64.sqrt()).abs() < 1e-12, "{}", r.norm_a);
}

#[test]
fn multiplication_estimate_holds() {
    let chart = flat_chart(65);
    let e = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    for t in 0..5 {
        let b = BumpSum::random(&mut trial_rng(21, t), 2, 2, 2, (-0.2, 0.2), (0.1, 0.13));
        let u = Section::of_bundle(&chart, &e, |x| b.value(x)).unwrap();
        let a = move |x: &[f64]| {
            let s = (x[0] + 2.0 * x[1]).sin();
            vec![C64::new(1.0 + s, 0.0), C64::new(0.0, s), C64::new(0.5, 0.0), C64::new(x[0], 0.0)]
        };
        for l in 0..=2 {
            for q in [Exponent::Finite(2.0), Exponent::Infinite] {
                let r = multiplication_check(&u, a, l, q).unwrap();
                assert!(r.passed, "{r:?}");
            }
        }
    }
}

fn half_line(points: usize) -> (Arc<Chart>, Picture) {
    let (a, b) = (0.01f64, 2.5f64);
    let chart = Chart::euclidean(ChartGrid::new(&[a], &[b], &[points]).unwrap()).unwrap();
    let grid = ChartGrid::new(&[a.ln()], &[b.ln()], &[points]).unwrap();
    (chart, Picture { grid, map: VectorField::new(1, |t| vec![t[0].exp()]) })
}

fn radial_bump(x: &[f64]) -> Vec<C64> {
    vec![C64::new((-(x[0] - 1.0).powi(2) / (2.0 * 0.15 * 0.15)).exp(), 0.0)]
}

#[test]
fn half_line_weight_two_pictures_agree_and_converge() {
    let rho = WeightPair::new(Arc::new(|x: &[f64]| x[0]), Arc::new(|_| 1.0));
    for l in [0, 1] {
        let mut prev = f64::INFINITY;
        for pts in [129, 257, 513] {
            let (chart, pic) = half_line(pts);
            let r = conformal_weighted_check(
                &chart, &BundleSpec::trivial(1), radial_bump, &rho, l, Exponent::Finite(2.0), &pic, 10.0,
            )
            .unwrap();
            let err = (r.ratio - 1.0).abs();
            assert!(err <= 0.01, "l={l} pts={pts} {r:?}");
            assert!(err < prev || err < 1e-12, "l={l} pts={pts} {err} {prev}");
            prev = err;
            if l == 0 {
                assert!((r.classical_ratio - r.ratio).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn unit_weight_identity_picture_is_exact() {
    let chart = flat_chart(65);
    let pic = Picture { grid: chart.grid().clone(), map: VectorField::new(2, |x| x.to_vec()) };
    let r = conformal_weighted_check(
        &chart, &BundleSpec::trivial(2), gaussian(0.12), &WeightPair::unit(), 2, Exponent::Finite(2.0), &pic, 1.0,
    )
    .unwrap();
    assert!((r.ratio - 1.0).abs() < 1e-13, "{r:?}");
    assert!((r.classical_ratio - 1.0).abs() < 1e-13, "{r:?}");
}

#[test]
fn nonadmissible_weight_is_rejected() {
    let chart = flat_chart(33);
    let pic = Picture { grid: chart.grid().clone(), map: VectorField::new(2, |x| x.to_vec()) };
    let steep = WeightPair::new(Arc::new(|x: &[f64]| (5.0 * x[0]).exp()), Arc::new(|_| 1.0));
    let r = conformal_weighted_check(
        &chart, &BundleSpec::trivial(2), gaussian(0.1), &steep, 1, Exponent::Finite(2.0), &pic, 1.0,
    );
    assert!(matches!(r, Err(nabla_calc::Error::NonadmissibleWeight { .. })));
}

#[test]
fn conformal_metric_norms_are_finite() {
    let g = MetricField::conformal_to_flat(2, "c", |x| 1.0 + 0.2 * x[0] * x[1]);
    let chart = Chart::new(ChartGrid::cube(2, -1.0, 1.0, 65).unwrap(), g).unwrap();
    let u = Section::of_bundle(&chart, &chart.line(), gaussian(0.12)).unwrap();
    let p = Exponent::Finite(2.0);
    assert!(sobolev_norm(&u, 1, p).unwrap() <= sobolev_norm(&u, 2, p).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn norms_are_homogeneous_and_subadditive(seed in 0u64..1000, re in -3.0f64..3.0, im in -3.0f64..3.0) {
        let chart = flat_chart(33);
        let bundle = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
        let b1 = BumpSum::random(&mut trial_rng(seed, 0), 2, 2, 1, (-0.15, 0.15), (0.1, 0.13));
        let b2 = BumpSum::random(&mut trial_rng(seed, 1), 2, 2, 1, (-0.15, 0.15), (0.1, 0.13));
        let u = Section::of_bundle(&chart, &bundle, |x| b1.value(x)).unwrap();
        let v = Section::of_bundle(&chart, &bundle, |x| b2.value(x)).unwrap();
        let c = C64::new(re, im);
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Finite(3.5), Exponent::Infinite] {
            let nu = sobolev_norm(&u, 1, p).unwrap();
            let ncu = sobolev_norm(&u.scale(c), 1, p).unwrap();
            prop_assert!((ncu - c.norm() * nu).abs() <= 1e-12 * (1.0 + ncu));
            let nv = sobolev_norm(&v, 1, p).unwrap();
            let nsum = sobolev_norm(&u.add(&v).unwrap(), 1, p).unwrap();
            prop_assert!(nsum <= (nu + nv) * (1.0 + 1e-12));
            prop_assert!(sobolev_norm(&u, 0, p).unwrap() <= nu * (1.0 + 1e-15));
        }
    }
}
