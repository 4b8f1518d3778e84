//! The Leibniz rule and the curvature commutator `[nabla_k, nabla_l] = R_kl`.

use nabla_calc::calculus::curvature;
use nabla_calc::checks::{curvature_commutator, leibniz};
use nabla_calc::{BundleSpec, Chart, ChartGrid, Result};

fn main() -> Result<()> {
    let spec = BundleSpec::from_exprs(
        2,
        2,
        &[
            vec!["0".into(), "i*x2".into(), "i*x2".into(), "0".into()],
            vec!["i*sin(x1)".into(), "0".into(), "0".into(), "-i*sin(x1)".into()],
        ],
    )?;
    for points in [65, 129] {
        let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, points)?.with_support_tol(None))?;
        let e = chart.bundle(&spec)?;
        let l = leibniz(&chart, &e, 3, 1, 1e-5)?;
        let k = curvature_commutator(&chart, &e, 3, 1, 1e-5)?;
        println!("{points:>4} points: Leibniz {:.3e}, commutator {:.3e}", l.measured, k.measured);
    }

    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 33)?)?;
    let e = chart.bundle(&BundleSpec::magnetic_example())?;
    let r = curvature(&chart, &e);
    let p = chart.grid().point_of(&[24, 16]);
    println!("R_12 of the magnetic bundle at {:?}:\n{}", chart.grid().coords(p), r.at(p, 0, 1));
    Ok(())
}
