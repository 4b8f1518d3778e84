//! Randomized verification harnesses shared by the scenario runner, the
//! acceptance suite and the examples. Each returns the worst measured
//! residual together with the bound it is held to.

use crate::bidiff::{assemble_divergence_form, duality_check, AdjointRoute, BidiffSpec};
use crate::bundles::{BundleSpec, SampledBundle};
use crate::calculus::{
    adjoint_pairing_defect, curvature, curvature_residual, divergence_field, divergence_on_grid, leibniz_residual,
    multiindex_derivative,
};
use crate::error::{Error, Result};
use crate::generators::{
    divergence_density, divergence_via_generators, nabla_via_generators, GeneratorSystem,
};
use crate::geometry::{VectorField, WeightPair};
use crate::grid::ChartGrid;
use crate::norms::{
    conformal_weighted_check, covering_norm, multiplication_check, perturbed_norm_check, sobolev_norm, BoxSet, Covering,
    Exponent, Picture,
};
use crate::operators::{mixed_to_nabla, nabla_to_mixed, random_mixed_spec, reorder_generators};
use crate::samples::{random_coefficient, random_section, random_section_of_width, trial_rng, BumpSum, CompactBump, TrigField};
use crate::section::{Chart, Section};
use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;
use std::sync::Arc;

/// Residuals at or below this are treated as exact when judging convergence.
pub const ROUND_OFF: f64 = 1e-12;

/// Worst residual of one check against its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    pub fn at_most(measured: f64, bound: f64, detail: impl Into<String>) -> Self {
        CheckOutcome { measured, bound, passed: measured <= bound, detail: detail.into() }
    }

    fn with(mut self, extra: bool, why: &str) -> Self {
        if !extra {
            self.passed = false;
            if !self.detail.is_empty() {
                self.detail.push_str("; ");
            }
            self.detail.push_str(why);
        }
        self
    }
}

/// Smooth bumps filling the middle of the box, wide enough to be well
/// resolved; meant for interior-only grids.
fn wide_bumps(chart: &Chart, d: usize, seed: u64, trial: u64) -> BumpSum {
    let g = chart.grid();
    BumpSum::in_box(&mut trial_rng(seed, trial), g.lower(), g.upper(), d, 2, 0.125, (0.15, 0.2))
}

/// Sections for norm checks: negligible at the faces on either kind of grid.
fn norm_section(chart: &Arc<Chart>, e: &Arc<SampledBundle>, seed: u64, trial: u64) -> Result<Section> {
    let width = if chart.grid().support_tol().is_some() { 0.05 } else { 0.075 };
    random_section_of_width(chart, e, width, seed, trial)
}

fn interior_depth(chart: &Chart, levels: usize) -> usize {
    levels * chart.grid().fd_order().radius()
}

/// Second derivatives of a bump section of the magnetic example,
/// `nabla_(i,j) xi` with 0-based indices, in closed form.
pub fn magnetic_second_derivative(b: &BumpSum, x: &[f64], i: usize, j: usize) -> Vec<C64> {
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

/// `nabla_(1,2)`, `nabla_(2,1)`, `nabla_(2,2)` of the magnetic example against
/// their closed forms on a flat two-dimensional chart.
pub fn magnetic_closed_form(chart: &Arc<Chart>, trials: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    if chart.dim() != 2 || !chart.sampled().flat {
        return Err(Error::Config("the magnetic example lives on a flat two-dimensional chart".into()));
    }
    let e = chart.bundle(&BundleSpec::magnetic_example())?;
    let depth = interior_depth(chart, 2);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let b = wide_bumps(chart, 2, seed, t);
        let u = Section::of_bundle(chart, &e, |x| b.value(x))?;
        for (i, j) in [(0, 1), (1, 0), (1, 1)] {
            let got = multiindex_derivative(&u, &[i, j])?;
            let (mut err, mut scale) = (0.0f64, 0.0f64);
            for p in 0..chart.npts() {
                if chart.grid().depth(p) < depth {
                    continue;
                }
                let want = magnetic_second_derivative(&b, &chart.grid().coords(p), i, j);
                for (g, w) in got.at(p).iter().zip(&want) {
                    err = err.max((g - w).norm());
                    scale = scale.max(w.norm());
                }
            }
            worst = worst.max(err / scale);
        }
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{trials} sections")))
}

/// Leibniz rule `nabla(a u) = (nabla a) u + (1 (x) a) nabla u` for random
/// endomorphism fields.
pub fn leibniz(chart: &Arc<Chart>, e: &Arc<SampledBundle>, trials: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let depth = interior_depth(chart, 4);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let b = wide_bumps(chart, e.dim, seed, t);
        let u = Section::of_bundle(chart, e, |x| b.value(x))?;
        let a = random_coefficient(chart, 0, 0, e, e, seed ^ 0x5eed, t)?;
        worst = worst.max(leibniz_residual(&a, &u, depth)?);
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{trials} sections")))
}

/// `(nabla_(k,l) - nabla_(l,k)) u = R_kl u` for all `k < l`.
pub fn curvature_commutator(chart: &Arc<Chart>, e: &Arc<SampledBundle>, trials: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let depth = interior_depth(chart, 4);
    let curv = curvature(chart, e);
    let n = chart.dim();
    let mut worst = 0.0f64;
    for t in 0..trials {
        let b = wide_bumps(chart, e.dim, seed, t);
        let u = Section::of_bundle(chart, e, |x| b.value(x))?;
        for k in 0..n {
            for l in k + 1..n {
                worst = worst.max(curvature_residual(&u, &curv, k, l, depth)?);
            }
        }
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{trials} sections")))
}

/// A random smooth vector field of frequency at most `freq`.
pub fn random_vector_field(n: usize, freq: f64, seed: u64, trial: u64) -> VectorField {
    let mut rng = trial_rng(seed, trial);
    let parts: Vec<TrigField> = (0..n).map(|_| TrigField::random(&mut rng, n, 2, freq)).collect();
    VectorField::new(n, move |x| parts.iter().map(|f| f.value(x).re).collect())
}

/// `|int (nabla_X u, v) + int (u, (nabla_X + div X) v)| <= tol ||u|| ||v||`
/// for exactly compactly supported pairs.
pub fn adjoint_pairing(chart: &Arc<Chart>, e: &Arc<SampledBundle>, trials: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let g = chart.grid();
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let b1 = CompactBump::in_box(&mut rng, g.lower(), g.upper(), e.dim, 0.075, (0.35, 0.425));
        let b2 = CompactBump::in_box(&mut rng, g.lower(), g.upper(), e.dim, 0.075, (0.35, 0.425));
        let x = random_vector_field(chart.dim(), 1.0, seed ^ 0xf1e1d, t);
        let u = Section::of_bundle(chart, e, |y| b1.value(y))?;
        let v = Section::of_bundle(chart, e, |y| b2.value(y))?;
        worst = worst.max(adjoint_pairing_defect(&u, &v, &x)?);
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{trials} pairs")))
}

/// Overlapping intervals `[lo + i s, lo + i s + L]`, `i < count`, that
/// cover `[lo, hi]` and all meet in the middle.
fn staggered(rng: &mut impl Rng, lo: f64, hi: f64, count: usize) -> Vec<(f64, f64)> {
    if count == 1 {
        return vec![(lo, hi)];
    }
    let w = hi - lo;
    let s = rng.gen_range(0.1..0.45) * w / (count - 1) as f64;
    let len = w - (count - 1) as f64 * s;
    (0..count)
        .map(|i| {
            let a = lo + i as f64 * s;
            // The last interval ends exactly at hi.
            (a, if i + 1 == count { hi } else { a + len })
        })
        .collect()
}

/// A random box covering of the chart box with multiplicity `target`.
pub fn random_covering(lower: &[f64], upper: &[f64], target: usize, seed: u64, trial: u64) -> Covering {
    let mut rng = trial_rng(seed, trial);
    let n = lower.len();
    let axis = rng.gen_range(0..n);
    // Multiplicity four also comes as a product of two staggered pairs.
    let product = target == 4 && n >= 2 && rng.gen_bool(0.5);
    let mut sets = Vec::new();
    if product {
        let other = (axis + 1) % n;
        let a = staggered(&mut rng, lower[axis], upper[axis], 2);
        let b = staggered(&mut rng, lower[other], upper[other], 2);
        for &(a0, a1) in &a {
            for &(b0, b1) in &b {
                let (mut lo, mut hi) = (lower.to_vec(), upper.to_vec());
                lo[axis] = a0;
                hi[axis] = a1;
                lo[other] = b0;
                hi[other] = b1;
                sets.push(BoxSet { lower: lo, upper: hi });
            }
        }
    } else {
        for (a0, a1) in staggered(&mut rng, lower[axis], upper[axis], target) {
            let (mut lo, mut hi) = (lower.to_vec(), upper.to_vec());
            lo[axis] = a0;
            hi[axis] = a1;
            sets.push(BoxSet { lower: lo, upper: hi });
        }
    }
    Covering { sets }
}

/// `||u|| <= |||u||| <= N^{1/p} ||u||` in `W^{1,p}` for `p = 1, 2, inf`
/// over coverings of multiplicity 1..4; at `p = inf` both sides agree.
/// The measured value is the worst relative violation.
pub fn covering_bounds(chart: &Arc<Chart>, e: &Arc<SampledBundle>, coverings: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let g = chart.grid();
    let mut worst = f64::NEG_INFINITY;
    let mut mults = Vec::new();
    for t in 0..coverings {
        let target = (t % 4) as usize + 1;
        let cov = random_covering(g.lower(), g.upper(), target, seed, t);
        let big_n = cov.multiplicity();
        mults.push(big_n);
        if big_n != target {
            return Err(Error::Config(format!("generated covering has multiplicity {big_n}, wanted {target}")));
        }
        let u = norm_section(chart, e, seed ^ 0xc0, t)?;
        for p in [Exponent::Finite(1.0), Exponent::Finite(2.0), Exponent::Infinite] {
            let plain = sobolev_norm(&u, 1, p)?;
            let c = covering_norm(&u, &cov, 1, p)?;
            let top = (big_n as f64).powf(p.reciprocal()) * plain;
            let slack = ((c.value - plain) / plain).min((top - c.value) / plain);
            worst = worst.max(-slack);
            if p == Exponent::Infinite {
                worst = worst.max((c.value - plain).abs() / plain);
            }
        }
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("multiplicities {mults:?}")))
}

/// `Psi Phi = 1`, vector and covector reconstruction, `nabla` through the
/// generators, and three closed-form divergence routes.
pub fn generator_identities(gens: &GeneratorSystem, e: &Arc<SampledBundle>, trials: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let chart = gens.chart().clone();
    let mut worst = gens.left_inverse_residual();
    let mut parts = vec![format!("left inverse {worst:.1e}")];
    let mut recon = 0.0f64;
    let mut nab = 0.0f64;
    let mut div = 0.0f64;
    for t in 0..trials {
        let x = random_vector_field(chart.dim(), 2.0, seed, t);
        recon = recon.max(gens.vector_reconstruction_residual(&x)).max(gens.covector_reconstruction_residual(&x));
        let u = random_section(&chart, e, seed ^ 0x9e, t)?;
        let du = u.nabla()?;
        nab = nab.max(du.sub(&nabla_via_generators(&u, gens)?)?.max_abs() / du.max_abs());
        let ddu = du.nabla()?;
        nab = nab.max(ddu.sub(&nabla_via_generators(&du, gens)?)?.max_abs() / ddu.max_abs());
        if gens.embedding().is_isometric() {
            let a = divergence_via_generators(&x, gens)?;
            let b = divergence_field(&chart, &x)?;
            let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for p in 0..chart.npts() {
                let c = divergence_density(&x, chart.metric(), &chart.grid().coords(p))?;
                div = div.max((a[p] - b[p]).abs() / scale).max((c - b[p]).abs() / scale);
            }
        }
    }
    parts.push(format!("reconstruction {recon:.1e}"));
    parts.push(format!("nabla {nab:.1e}"));
    if gens.embedding().is_isometric() {
        parts.push(format!("divergence {div:.1e}"));
    }
    worst = worst.max(recon).max(nab).max(div);
    Ok(CheckOutcome::at_most(worst, tol, parts.join(", ")))
}

/// Density-formula divergence on the grid against the Christoffel trace.
pub fn grid_divergence(chart: &Arc<Chart>, trials: u64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let depth = interior_depth(chart, 1);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let x = random_vector_field(chart.dim(), 2.0, seed, t);
        let a = divergence_on_grid(chart, &x)?;
        let b = divergence_field(chart, &x)?;
        let (mut err, mut scale) = (0.0f64, 0.0f64);
        for p in 0..chart.npts() {
            if chart.grid().depth(p) >= depth {
                err = err.max((a[p] - b[p]).abs());
                scale = scale.max(b[p].abs());
            }
        }
        worst = worst.max(err / scale);
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{trials} fields")))
}

/// mixed -> nabla -> mixed -> sorted preserves the map and sorts every term.
pub fn operator_round_trip(
    gens: &GeneratorSystem,
    e: &Arc<SampledBundle>,
    specs: u64,
    max_order: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckOutcome> {
    let chart = gens.chart().clone();
    // Compare on the middle half of the box so refinements see the same region.
    let quarter = chart.grid().shape().iter().map(|s| (s - 1) / 4).min().unwrap_or(0);
    let depth = interior_depth(&chart, 4 * max_order).max(quarter);
    let mut worst = 0.0f64;
    let mut sorted = true;
    for t in 0..specs {
        let m = random_mixed_spec(gens, e, max_order, 3, seed, t)?;
        let back = reorder_generators(&nabla_to_mixed(&mixed_to_nabla(&m)?, gens)?, gens)?;
        sorted &= back.terms().iter().all(|term| term.fields.windows(2).all(|w| w[0] <= w[1]));
        let u = random_section(&chart, e, seed ^ 0x77, t)?;
        let want = m.apply(&u)?;
        let got = back.apply(&u)?;
        worst = worst.max(got.sub(&want)?.max_abs_interior(depth) / want.max_abs_interior(depth));
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{specs} specs")).with(sorted, "unsorted output tuple"))
}

/// Random skew-Hermitian perturbation potentials `B_k = c_k cos(w_k . x) S_k`.
pub fn skew_perturbation(n: usize, d: usize, scale: f64, seed: u64, trial: u64) -> impl Fn(&[f64]) -> Vec<C64> + Send + Sync + Clone + 'static {
    let mut rng = trial_rng(seed, trial);
    let mats: Vec<(Vec<C64>, Vec<f64>)> = (0..n)
        .map(|_| {
            let mut m = vec![C64::new(0.0, 0.0); d * d];
            for a in 0..d {
                m[a * d + a] = C64::new(0.0, rng.gen_range(-1.0..1.0));
                for b in a + 1..d {
                    let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    m[a * d + b] = z;
                    m[b * d + a] = -z.conj();
                }
            }
            (m, (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        })
        .collect();
    move |x: &[f64]| {
        let mut out = Vec::with_capacity(n * d * d);
        for (m, w) in &mats {
            let ph = scale * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().cos();
            out.extend(m.iter().map(|v| v * ph));
        }
        out
    }
}

/// `C_l^{-1} <= ||u||_{nabla+B} / ||u||_nabla <= C_l` for `l <= 2`, `p = 2`.
/// Measured: the worst of `ratio / C_l` and `1 / (ratio C_l)`.
pub fn perturbed_norms(chart: &Arc<Chart>, e: &Arc<SampledBundle>, trials: u64, seed: u64) -> Result<CheckOutcome> {
    let (n, d) = (chart.dim(), e.dim);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let u = norm_section(chart, e, seed, t)?;
        let scale = trial_rng(seed ^ 0xb, t).gen_range(0.1..2.0);
        for l in 0..=2 {
            let r = perturbed_norm_check(&u, skew_perturbation(n, d, scale, seed ^ 0xb, t), l, 2.0)?;
            worst = worst.max(r.ratio / r.constant).max(1.0 / (r.ratio * r.constant));
        }
    }
    Ok(CheckOutcome::at_most(worst, 1.0 + 1e-12, format!("{trials} trials, l <= 2, p = 2")))
}

/// `||a u||_{W^{l,q}} <= C ||a||_{W^{l,inf}} ||u||_{W^{l,q}}` for `l <= 2`,
/// `q = 2, inf`. Measured: the worst ratio of the two sides.
pub fn multiplication(chart: &Arc<Chart>, e: &Arc<SampledBundle>, trials: u64, seed: u64) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    let d = e.dim;
    for t in 0..trials {
        let u = norm_section(chart, e, seed, t)?;
        let mut rng = trial_rng(seed ^ 0xa, t);
        let entries: Vec<TrigField> = (0..d * d).map(|_| TrigField::random(&mut rng, chart.dim(), 2, 2.0)).collect();
        let a = move |x: &[f64]| entries.iter().map(|f| f.value(x)).collect::<Vec<_>>();
        for l in 0..=2 {
            for q in [Exponent::Finite(2.0), Exponent::Infinite] {
                let r = multiplication_check(&u, a.clone(), l, q)?;
                worst = worst.max(r.product / r.bound);
            }
        }
    }
    Ok(CheckOutcome::at_most(worst, 1.0 + 1e-12, format!("{trials} trials, l <= 2")))
}

/// The half-line `(0.01, 2.5)` with `rho = r`, pictured on `t = log r`.
pub fn half_line(points: usize) -> Result<(Arc<Chart>, Picture)> {
    let (a, b) = (0.01f64, 2.5f64);
    let chart = Chart::euclidean(ChartGrid::new(&[a], &[b], &[points])?)?;
    let grid = ChartGrid::new(&[a.ln()], &[b.ln()], &[points])?;
    Ok((chart, Picture { grid, map: VectorField::new(1, |t| vec![t[0].exp()]) }))
}

/// Two-route weighted norm ratio on the half-line for each resolution;
/// passes when the first is within `tol` of one and the errors decrease.
pub fn half_line_weighted(points: &[usize], l: usize, tol: f64) -> Result<(CheckOutcome, Vec<f64>)> {
    let rho = WeightPair::new(Arc::new(|x: &[f64]| x[0]), Arc::new(|_| 1.0));
    let bump = |x: &[f64]| vec![C64::new((-(x[0] - 1.0).powi(2) / (2.0 * 0.15 * 0.15)).exp(), 0.0)];
    let mut errs = Vec::new();
    for &pts in points {
        let (chart, pic) = half_line(pts)?;
        let r = conformal_weighted_check(&chart, &BundleSpec::trivial(1), bump, &rho, l, Exponent::Finite(2.0), &pic, 10.0)?;
        errs.push((r.ratio - 1.0).abs());
    }
    // Both routes may agree to round-off already, as they do at l = 0.
    let monotone = errs.windows(2).all(|w| w[1] < w[0] || w[0].max(w[1]) <= ROUND_OFF);
    let first = errs.first().copied().unwrap_or(f64::NAN);
    let out = CheckOutcome::at_most(first, tol, format!("|ratio - 1| = {errs:?}")).with(monotone, "not monotone");
    Ok((out, errs))
}

/// `|<P_b u, w> - B(u, w)| <= tol ||u||_{H^m} ||w||_{H^m}` over random pairs
/// of bumps of relative width `width`.
pub fn divergence_duality(spec: &BidiffSpec, route: AdjointRoute, pairs: u64, width: f64, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let p = assemble_divergence_form(spec, route)?;
    let chart = spec.chart();
    let mut worst = 0.0f64;
    for t in 0..pairs {
        let u = random_section_of_width(chart, spec.source(), width, seed, 2 * t)?;
        let w = random_section_of_width(chart, spec.target(), width, seed, 2 * t + 1)?;
        worst = worst.max(duality_check(spec, &p, &u, &w, tol)?.residual);
    }
    Ok(CheckOutcome::at_most(worst, tol, format!("{pairs} pairs, m = {}", spec.half_order())))
}

/// A bidifferential spec with random coefficients for every `i, j <= m`.
pub fn random_bidiff(chart: &Arc<Chart>, e: &Arc<SampledBundle>, m: usize, seed: u64) -> Result<BidiffSpec> {
    let mut coeffs = Vec::new();
    for i in 0..=m {
        for j in 0..=m {
            coeffs.push(((i, j), random_coefficient(chart, j, i, e, e, seed, (10 * i + j) as u64)?));
        }
    }
    BidiffSpec::new(chart, e, e, m, coeffs, crate::operators::CoefficientClass::Smooth)
}
