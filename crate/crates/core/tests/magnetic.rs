//! Iterated derivatives of the magnetic bundle on R^2 against closed forms.

use nabla_calc::calculus::{coordinate_chain, multiindex_derivative};
use nabla_calc::samples::{trial_rng, BumpSum};
use nabla_calc::{BundleSpec, Chart, ChartGrid, Section, C64};
use std::sync::Arc;

fn setup(points: usize) -> (Arc<Chart>, Arc<nabla_calc::SampledBundle>) {
    let grid = ChartGrid::cube(2, -1.0, 1.0, points).unwrap().with_support_tol(None);
    let chart = Chart::euclidean(grid).unwrap();
    let bundle = chart.bundle(&BundleSpec::magnetic_example()).unwrap();
    (chart, bundle)
}

/// Closed forms for (i, j) in 0-based indices.
fn closed_form(b: &BumpSum, x: &[f64], i: usize, j: usize) -> Vec<C64> {
    let e = C64::new(0.0, x[0].powi(3)).exp();
    let eb = e.conj();
    let ii = C64::new(0.0, 1.0);
    let v = b.value(x);
    let d1 = b.grad(x, 0);
    let d2 = b.grad(x, 1);
    let h = b.hess(x, i, j);
    match (i, j) {
        (0, 0) => h,
        (0, 1) => {
            let c = 3.0 * x[0] * x[0];
            vec![h[0] + ii * c * e * v[1] + e * d1[1], h[1] + ii * c * eb * v[0] - eb * d1[0]]
        }
        (1, 0) => vec![h[0] + e * d1[1], h[1] - eb * d1[0]],
        _ => vec![h[0] + 2.0 * e * d2[1] - v[0], h[1] - 2.0 * eb * d2[0] - v[1]],
    }
}

fn worst_relative(points: usize, trials: u64) -> f64 {
    let (chart, bundle) = setup(points);
    let depth = 2 * chart.grid().fd_order().radius();
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = trial_rng(11, t);
        let b = BumpSum::random(&mut rng, 2, 2, 2, (-0.25, 0.25), (0.3, 0.4));
        let u = Section::of_bundle(&chart, &bundle, |x| b.value(x)).unwrap();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let got = multiindex_derivative(&u, &[i, j]).unwrap();
            let mut err = 0.0f64;
            let mut scale = 0.0f64;
            for p in 0..chart.npts() {
                if chart.grid().depth(p) < depth {
                    continue;
                }
                let want = closed_form(&b, &chart.grid().coords(p), i, j);
                for (g, w) in got.at(p).iter().zip(&want) {
                    err = err.max((g - w).norm());
                    scale = scale.max(w.norm());
                }
            }
            worst = worst.max(err / scale);
        }
    }
    worst
}

#[test]
fn closed_forms_on_129_grid() {
    let w = worst_relative(129, 20);
    println!("worst relative error {w:.3e}");
    assert!(w <= 1e-5, "{w}");
}

#[test]
fn error_decays_at_fourth_order() {
    let a = worst_relative(65, 3);
    let b = worst_relative(129, 3);
    assert!(a / b >= 12.0, "{a} {b}");
}

#[test]
fn empty_index_is_identity_and_chain_agrees_on_flat_metric() {
    let (chart, bundle) = setup(33);
    let mut rng = trial_rng(2, 0);
    let b = BumpSum::random(&mut rng, 2, 2, 1, (-0.2, 0.2), (0.15, 0.2));
    let u = Section::of_bundle(&chart, &bundle, |x| b.value(x)).unwrap();
    let v = multiindex_derivative(&u, &[]).unwrap();
    assert_eq!(v.data(), u.data());
    for idx in [vec![1usize, 0], vec![1, 1, 0]] {
        let a = multiindex_derivative(&u, &idx).unwrap();
        let c = coordinate_chain(&u, &idx).unwrap();
        assert!(a.sub(&c).unwrap().max_abs() <= 1e-12 * a.max_abs());
    }
}
