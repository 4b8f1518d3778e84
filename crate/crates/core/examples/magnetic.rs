//! Iterated covariant derivatives of the magnetic bundle on the square,
//! compared with their closed forms as the grid is refined.

use nabla_calc::calculus::multiindex_derivative;
use nabla_calc::checks::{magnetic_closed_form, magnetic_second_derivative};
use nabla_calc::samples::{trial_rng, BumpSum};
use nabla_calc::{BundleSpec, Chart, ChartGrid, Result, Section};

fn main() -> Result<()> {
    let grid = ChartGrid::cube(2, -1.0, 1.0, 129)?.with_support_tol(None);
    let chart = Chart::euclidean(grid)?;
    let bundle = chart.bundle(&BundleSpec::magnetic_example())?;

    let bump = BumpSum::random(&mut trial_rng(1, 0), 2, 2, 2, (-0.25, 0.25), (0.3, 0.4));
    let u = Section::of_bundle(&chart, &bundle, |x| bump.value(x))?;
    let d22 = multiindex_derivative(&u, &[1, 1])?;
    let p = chart.grid().point_of(&[64, 70]);
    let x = chart.grid().coords(p);
    println!("nabla_(2,2) u at {x:?}");
    println!("  grid   {:?}", d22.at(p));
    println!("  closed {:?}", magnetic_second_derivative(&bump, &x, 1, 1));

    for points in [33, 65, 129, 257] {
        let c = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, points)?.with_support_tol(None))?;
        let o = magnetic_closed_form(&c, 4, 7, 1e-5)?;
        println!("{points:>4} points: worst relative error {:.3e}", o.measured);
    }
    Ok(())
}
