//! A bidifferential form, its divergence-form operator and the weak duality
//! `<P u, w> = B(u, w)`.

use nabla_calc::bidiff::{assemble_divergence_form, dirichlet_form, duality_check, AdjointRoute, BidiffSpec};
use nabla_calc::checks::{divergence_duality, random_bidiff};
use nabla_calc::samples::random_section_of_width;
use nabla_calc::{BundleSpec, Chart, ChartGrid, Result};

fn main() -> Result<()> {
    let chart = Chart::euclidean(ChartGrid::cube(2, -1.0, 1.0, 129)?.with_support_tol(None))?;
    let e = chart.bundle(&BundleSpec::magnetic_example())?;

    let energy = BidiffSpec::energy(&chart, &e);
    let u = random_section_of_width(&chart, &e, 0.075, 1, 0)?;
    let w = random_section_of_width(&chart, &e, 0.075, 1, 1)?;
    println!("energy form B(u, u) = {:.6}", dirichlet_form(&energy, &u, &u)?);
    let p = assemble_divergence_form(&energy, AdjointRoute::Trace)?;
    let r = duality_check(&energy, &p, &u, &w, 1e-5)?;
    println!("<P u, w> = {:.8}\n B(u, w) = {:.8}\n residual {:.3e}", r.pairing, r.form, r.residual);

    for m in [1, 2] {
        let b = random_bidiff(&chart, &e, m, 3)?;
        let o = divergence_duality(&b, AdjointRoute::Trace, 5, 0.075, 2, 1e-5)?;
        println!("random form of order {m}: worst residual {:.3e}", o.measured);
    }
    Ok(())
}
