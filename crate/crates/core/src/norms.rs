//! `L^p`, `nabla`-Sobolev, weighted and covering norms by trapezoid
//! quadrature, plus the explicit constants of the multiplication and
//! perturbation estimates.
//!
//! Pointwise norms are Hilbert-Schmidt norms with `g^{-1}` on cotangent
//! slots and the fiber metric on `E`. `p = inf` is a grid maximum.

use crate::bundles::BundleSpec;
use crate::calculus::pointwise_inner;
use crate::error::{Error, Result};
use crate::geometry::{conformal_rescale, MetricField, ScalarFn, VectorField, WeightPair};
use crate::grid::ChartGrid;
use crate::section::{Chart, Section};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// An exponent in `[1, inf]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Finite(f64),
    #[serde(with = "inf_tag")]
    Infinite,
}

mod inf_tag {
    use serde::{Deserialize, Deserializer, Serializer};
    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "inf" || s == "infinity" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}")))
        }
    }
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_infinite() && p > 0.0 {
            Ok(Exponent::Infinite)
        } else if p >= 1.0 {
            Ok(Exponent::Finite(p))
        } else {
            Err(Error::Config(format!("exponent {p} is below 1")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `1/p`, zero for `p = inf`.
    pub fn reciprocal(self) -> f64 {
        match self {
            Exponent::Finite(p) => 1.0 / p,
            Exponent::Infinite => 0.0,
        }
    }

    /// `l^p` combination of nonnegative parts.
    pub fn combine(self, parts: &[f64]) -> f64 {
        match self {
            Exponent::Infinite => parts.iter().cloned().fold(0.0, f64::max),
            Exponent::Finite(p) => parts.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

impl From<f64> for Exponent {
    fn from(p: f64) -> Self {
        if p.is_infinite() {
            Exponent::Infinite
        } else {
            Exponent::Finite(p)
        }
    }
}

/// Pointwise norm `|u(x)|` at every grid point.
pub fn pointwise_norm(u: &Section) -> Result<Vec<f64>> {
    Ok(pointwise_inner(u, u)?.into_iter().map(|v| v.re.max(0.0).sqrt()).collect())
}

fn lp_of_pointwise(chart: &Chart, m: &[f64], p: Exponent, mask: Option<&[bool]>) -> f64 {
    let keep = |i: usize| mask.map_or(true, |k| k[i]);
    match p {
        Exponent::Infinite => m.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, v)| *v).fold(0.0, f64::max),
        Exponent::Finite(p) => {
            let terms: Vec<f64> = m
                .par_iter()
                .enumerate()
                .map(|(i, v)| if keep(i) { chart.volume_weight(i) * v.powf(p) } else { 0.0 })
                .collect();
            terms.iter().sum::<f64>().powf(1.0 / p)
        }
    }
}

/// `||u||_{L^p}`.
pub fn lp_norm(u: &Section, p: Exponent) -> Result<f64> {
    Ok(lp_of_pointwise(u.chart(), &pointwise_norm(u)?, p, None))
}

/// `[||nabla^j u||_{L^p}]_{j <= s}`.
pub fn sobolev_parts(u: &Section, s: usize, p: Exponent) -> Result<Vec<f64>> {
    check_margin(u, s)?;
    let mut parts = Vec::with_capacity(s + 1);
    let mut v = u.clone();
    for j in 0..=s {
        if j > 0 {
            v = v.nabla()?;
        }
        parts.push(lp_norm(&v, p)?);
    }
    Ok(parts)
}

fn check_margin(u: &Section, s: usize) -> Result<()> {
    let g = u.chart().grid();
    let needed = s * g.fd_order().radius();
    if u.is_compact() && g.support_tol().is_some() && needed > g.margin() {
        return Err(Error::MarginTooSmall { margin: g.margin(), needed });
    }
    Ok(())
}

/// `||u||_{W^{s,p}_nabla}`: the `l^p` combination of `||nabla^j u||_{L^p}`.
pub fn sobolev_norm(u: &Section, s: usize, p: Exponent) -> Result<f64> {
    Ok(p.combine(&sobolev_parts(u, s, p)?))
}

/// The multi-index form `(sum_{|I| <= s} ||nabla_I u||^p)^{1/p}`. Equal to
/// [`sobolev_norm`] for `p = 2` on flat metrics with identity fiber metric.
pub fn multiindex_sobolev_norm(u: &Section, s: usize, p: Exponent) -> Result<f64> {
    let n = u.chart().dim();
    let mut parts = Vec::new();
    let mut v = u.clone();
    for j in 0..=s {
        if j > 0 {
            v = v.nabla()?;
        }
        for flat in 0..n.pow(j as u32) {
            let mut c = v.clone();
            let mut t = flat;
            let mut idx = vec![0; j];
            for slot in (0..j).rev() {
                idx[slot] = t % n;
                t /= n;
            }
            for &i in &idx {
                c = c.slot_component(i)?;
            }
            parts.push(lp_norm(&c, p)?);
        }
    }
    Ok(p.combine(&parts))
}

/// `[||rho^j nabla^j (f0^{-1} u)||_{L^p}]_{j <= s}`.
pub fn weighted_parts(u: &Section, s: usize, p: Exponent, weight: &WeightPair) -> Result<Vec<f64>> {
    let chart = u.chart().clone();
    weight.validate(chart.grid())?;
    check_margin(u, s)?;
    let rho = chart.sample(&weight.rho);
    let finv: Vec<C64> = chart.sample(&weight.f0).into_iter().map(|v| C64::new(1.0 / v, 0.0)).collect();
    let mut v = u.mul_scalar_field(&finv);
    let mut parts = Vec::with_capacity(s + 1);
    for j in 0..=s {
        if j > 0 {
            v = v.nabla()?;
        }
        let rj: Vec<C64> = rho.iter().map(|r| C64::new(r.powi(j as i32), 0.0)).collect();
        parts.push(lp_norm(&v.mul_scalar_field(&rj), p)?);
    }
    Ok(parts)
}

/// `||u||_{f0 W^{s,p}_{nabla, rho}}`.
pub fn weighted_sobolev_norm(u: &Section, s: usize, p: Exponent, weight: &WeightPair) -> Result<f64> {
    Ok(p.combine(&weighted_parts(u, s, p, weight)?))
}

/// A closed box in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

/// A finite covering by boxes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub sets: Vec<BoxSet>,
}

impl Covering {
    /// Largest number of sets with a common point. A maximal family meets in
    /// a box whose lower corner is built from lower faces of its members,
    /// so those corners are the only candidates that need counting.
    pub fn multiplicity(&self) -> usize {
        let Some(first) = self.sets.first() else { return 0 };
        let n = first.lower.len();
        let m = self.sets.len();
        let mut best = 0;
        let mut digits = vec![0usize; n];
        loop {
            let x: Vec<f64> = (0..n).map(|a| self.sets[digits[a]].lower[a]).collect();
            best = best.max(self.sets.iter().filter(|b| b.contains(&x)).count());
            let mut a = 0;
            while a < n {
                digits[a] += 1;
                if digits[a] < m {
                    break;
                }
                digits[a] = 0;
                a += 1;
            }
            if a == n {
                break;
            }
        }
        best
    }
}

/// `|||u|||_{U,s,p}` and the multiplicity `N(U)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoveringNorm {
    pub value: f64,
    pub multiplicity: usize,
}

/// `|||u|||^p = sum_i sum_{j <= s} ||nabla^j u||^p_{L^p(U_i)}`, or the max
/// over `i` for `p = inf`. Every grid point outside the support margin must
/// lie in some set.
pub fn covering_norm(u: &Section, covering: &Covering, s: usize, p: Exponent) -> Result<CoveringNorm> {
    if covering.sets.is_empty() {
        return Err(Error::EmptyCovering);
    }
    let chart = u.chart().clone();
    let g = chart.grid();
    let n = g.dim();
    if covering.sets.iter().any(|b| b.lower.len() != n || b.upper.len() != n) {
        return Err(Error::ShapeMismatch("covering set dimension".into()));
    }
    let masks: Vec<Vec<bool>> = covering
        .sets
        .iter()
        .map(|b| (0..g.npts()).map(|q| b.contains(&g.coords(q))).collect())
        .collect();
    for q in 0..g.npts() {
        if g.depth(q) >= g.margin() && !masks.iter().any(|m| m[q]) {
            return Err(Error::IncompleteCovering);
        }
    }
    check_margin(u, s)?;
    let mut pointwise = Vec::with_capacity(s + 1);
    let mut v = u.clone();
    for j in 0..=s {
        if j > 0 {
            v = v.nabla()?;
        }
        pointwise.push(pointwise_norm(&v)?);
    }
    let per_set: Vec<f64> = masks
        .iter()
        .map(|m| {
            let parts: Vec<f64> = pointwise.iter().map(|pw| lp_of_pointwise(&chart, pw, p, Some(m))).collect();
            p.combine(&parts)
        })
        .collect();
    Ok(CoveringNorm { value: p.combine(&per_set), multiplicity: covering.multiplicity() })
}

fn exponents_match(p: Exponent, q: Exponent, r: Exponent) -> Result<()> {
    if (p.reciprocal() + q.reciprocal() - r.reciprocal()).abs() > 1e-12 {
        return Err(Error::ExponentMismatch { p: p.value(), q: q.value(), r: r.value() });
    }
    Ok(())
}

/// `C_{l,p,q}` with `C_0 = 1` and `C_l^r = C_{l-1}^r (1 + 2^r)`, so
/// `C_l = (1 + 2^r)^{l/r}`; for `r = inf` the limit `2^l`.
pub fn multiplication_constant(l: usize, p: Exponent, q: Exponent, r: Exponent) -> Result<f64> {
    exponents_match(p, q, r)?;
    Ok(match r {
        Exponent::Infinite => 2f64.powi(l as i32),
        Exponent::Finite(r) => (1.0 + 2f64.powf(r)).powf(l as f64 / r),
    })
}

/// `C_l` of the perturbation estimate: `C_0 = 1` and
/// `C_l^p = C_{l-1}^p 2^{p-1} [2 + C_{l-1,p}^p ||A||^p]` where `C_{l-1,p}`
/// is the multiplication constant for `W^{l-1,inf} x W^{l-1,p}`.
pub fn equivalence_constant(l: usize, p: f64, norm_a: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Config(format!("equivalence constant needs finite p >= 1, got {p}")));
    }
    let pe = Exponent::Finite(p);
    let mut cp = 1.0f64;
    for k in 1..=l {
        let m = multiplication_constant(k - 1, Exponent::Infinite, pe, pe)?;
        cp *= 2f64.powf(p - 1.0) * (2.0 + m.powf(p) * norm_a.powf(p));
    }
    Ok(cp.powf(1.0 / p))
}

/// The chart enlarged by `layers` grid layers on every face, same spacing.
pub fn padded_chart(chart: &Chart, layers: usize) -> Result<Arc<Chart>> {
    let g = chart.grid();
    let h = g.spacing();
    let lower: Vec<f64> = g.lower().iter().zip(h).map(|(a, h)| a - layers as f64 * h).collect();
    let upper: Vec<f64> = g.upper().iter().zip(h).map(|(b, h)| b + layers as f64 * h).collect();
    let shape: Vec<usize> = g.shape().iter().map(|s| s + 2 * layers).collect();
    let grid = ChartGrid::new(&lower, &upper, &shape)?.with_fd_order(g.fd_order()).with_support_tol(None);
    Chart::new(grid, chart.metric().clone())
}

/// `max_{j <= s} sup_x |nabla^j a(x)|` over the points of `chart` for a
/// closed-form field `a` with the given slots and bundles. The field is
/// sampled on a padded grid so every stencil stays on true data.
#[allow(clippy::too_many_arguments)]
pub fn coefficient_sup_norm(
    chart: &Chart,
    lower: usize,
    upper: usize,
    out: &BundleSpec,
    inn: &BundleSpec,
    s: usize,
    a: impl Fn(&[f64]) -> Vec<C64> + Sync,
) -> Result<f64> {
    let layers = s * chart.grid().fd_order().radius();
    let padded = padded_chart(chart, layers)?;
    let o = padded.bundle(out)?;
    let i = padded.bundle(inn)?;
    let mut v = Section::coefficient(&padded, lower, upper, &o, &i, a)?;
    let mut best = 0.0f64;
    for j in 0..=s {
        if j > 0 {
            v = v.nabla()?;
        }
        let pw = pointwise_norm(&v)?;
        let g = padded.grid();
        for (q, m) in pw.iter().enumerate() {
            if g.depth(q) >= layers {
                best = best.max(*m);
            }
        }
    }
    Ok(best)
}

/// Outcome of a two-sided norm comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub base: f64,
    pub perturbed: f64,
    pub ratio: f64,
    pub norm_a: f64,
    pub constant: f64,
    pub passed: bool,
}

/// Compares `||u||_{W^{l,p}}` under `nabla` and under `nabla + B` with the
/// certified constant from [`equivalence_constant`]. `b` returns the
/// perturbation `[B_1, .., B_n]` flattened like bundle potentials.
pub fn perturbed_norm_check(
    u: &Section,
    b: impl Fn(&[f64]) -> Vec<C64> + Send + Sync + Clone + 'static,
    l: usize,
    p: f64,
) -> Result<EquivalenceReport> {
    let chart = u.chart().clone();
    let spec = u.out_bundle().spec.clone();
    let (n, d) = (chart.dim(), spec.fiber_dim());
    let base_spec = spec.clone();
    let b2 = b.clone();
    let mut tilde = BundleSpec::from_fn(n, d, &format!("{}+B", spec.name()), move |x| {
        let a = base_spec.potentials_at(x);
        a.iter().zip(b2(x)).map(|(a, b)| a + b).collect()
    });
    if !spec.has_identity_metric() {
        let s2 = spec.clone();
        tilde = tilde.with_fiber_metric(move |x| {
            let m = s2.fiber_metric_at(x);
            (0..d * d).map(|i| m[(i / d, i % d)]).collect()
        });
    }
    let tb = chart.bundle(&tilde)?;
    let pe = Exponent::Finite(p);
    let base = sobolev_norm(u, l, pe)?;
    let perturbed = sobolev_norm(&u.clone().with_bundles(&tb, u.in_bundle())?, l, pe)?;
    let norm_a = if l == 0 {
        0.0
    } else {
        coefficient_sup_norm(&chart, 1, 0, &spec, &spec, l - 1, |x| b(x))?
    };
    let constant = equivalence_constant(l, p, norm_a)?;
    let ratio = perturbed / base;
    let slack = 1e-12;
    let passed = ratio <= constant * (1.0 + slack) && ratio * constant >= 1.0 - slack;
    Ok(EquivalenceReport { base, perturbed, ratio, norm_a, constant, passed })
}

/// Outcome of the multiplication estimate `||a u|| <= C ||a|| ||u||`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MultiplicationReport {
    pub product: f64,
    pub bound: f64,
    pub norm_a: f64,
    pub norm_u: f64,
    pub constant: f64,
    pub passed: bool,
}

/// Checks `||a u||_{W^{l,q}} <= C_{l,q} ||a||_{W^{l,inf}} ||u||_{W^{l,q}}`
/// for a closed-form endomorphism field `a` of the bundle of `u`.
pub fn multiplication_check(
    u: &Section,
    a: impl Fn(&[f64]) -> Vec<C64> + Sync + Clone,
    l: usize,
    q: Exponent,
) -> Result<MultiplicationReport> {
    let chart = u.chart().clone();
    let e = u.out_bundle().clone();
    let coef = Section::coefficient(&chart, 0, 0, &e, &e, a.clone())?;
    let prod = Section::compose(&coef, u)?;
    let product = sobolev_norm(&prod, l, q)?;
    let norm_u = sobolev_norm(u, l, q)?;
    let norm_a = coefficient_sup_norm(&chart, 0, 0, &e.spec, &e.spec, l, a)?;
    let constant = multiplication_constant(l, Exponent::Infinite, q, q)?;
    let bound = constant * norm_a * norm_u;
    Ok(MultiplicationReport { product, bound, norm_a, norm_u, constant, passed: product <= bound * (1.0 + 1e-12) })
}

/// The second picture for [`conformal_weighted_check`]: a grid in new
/// coordinates `t` and the map `t -> x` into the original chart.
#[derive(Clone, Debug)]
pub struct Picture {
    pub grid: ChartGrid,
    pub map: VectorField,
}

/// Both sides of the weighted/conformal identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConformalReport {
    /// `||u||_{f0 W^{l,p}_{nabla,rho}(g)}` on the original grid.
    pub weighted: f64,
    /// `(sum_j ||rho^{n/p} nabla^j_g (f0^{-1} u)||^p_{L^p(g0)})^{1/p}` on the picture grid.
    pub twisted: f64,
    /// `||rho^{n/p} f0^{-1} u||_{W^{l,p}(g0)}` with the Levi-Civita connection of `g0`.
    pub classical: f64,
    pub ratio: f64,
    pub classical_ratio: f64,
    pub admissibility: f64,
}

/// Pullback of a metric along `map` (Jacobian by closed-form differencing).
pub fn pullback_metric(metric: &MetricField, map: &VectorField) -> MetricField {
    let m = metric.clone();
    let f = map.clone();
    let n = map.dim();
    MetricField::from_fn(n, &format!("pullback({})", metric.name()), move |t| {
        let x = f.at(t);
        let j: Vec<Vec<f64>> = (0..n).map(|k| f.derivative(t, k)).collect();
        let g = m.matrix(&x);
        let jm = DMatrix::from_fn(g.nrows(), n, |i, k| j[k][i]);
        let pb = jm.transpose() * g * jm;
        (0..n * n).map(|i| pb[(i / n, i % n)]).collect()
    })
}

/// Pullback of a bundle's potentials and fiber metric along `map`.
pub fn pullback_bundle(spec: &BundleSpec, map: &VectorField) -> BundleSpec {
    let d = spec.fiber_dim();
    let n = map.dim();
    let mut out = if spec.is_flat() {
        BundleSpec::flat(n, d)
    } else {
        let s = spec.clone();
        let f = map.clone();
        let m = spec.base_dim();
        BundleSpec::from_fn(n, d, &format!("pullback({})", spec.name()), move |t| {
            let x = f.at(t);
            let a = s.potentials_at(&x);
            let dd = d * d;
            let mut res = vec![C64::new(0.0, 0.0); n * dd];
            for k in 0..n {
                let jk = f.derivative(t, k);
                for i in 0..m {
                    for e in 0..dd {
                        res[k * dd + e] += a[i * dd + e] * jk[i];
                    }
                }
            }
            res
        })
    };
    if !spec.has_identity_metric() {
        let s = spec.clone();
        let f = map.clone();
        out = out.with_fiber_metric(move |t| {
            let h = s.fiber_metric_at(&f.at(t));
            (0..d * d).map(|i| h[(i / d, i % d)]).collect()
        });
    }
    out.with_name(&format!("pullback({})", spec.name()))
}

/// Computes the weighted norm of `u` on `chart` and, on the picture grid,
/// the same quantity written in the rescaled metric `g0 = rho^{-2} g` with
/// the `rho^{n/p}` twist. The two agree in the continuum, so their ratio
/// measures discretization error. The classical `W^{l,p}(g0)` norm of the
/// twisted section is reported alongside; it is only equivalent.
#[allow(clippy::too_many_arguments)]
pub fn conformal_weighted_check(
    chart: &Arc<Chart>,
    bundle: &BundleSpec,
    u: impl Fn(&[f64]) -> Vec<C64> + Sync,
    weight: &WeightPair,
    l: usize,
    p: Exponent,
    picture: &Picture,
    admissibility_bound: f64,
) -> Result<ConformalReport> {
    let admissibility = weight.ensure_admissible(chart.grid(), chart.metric(), admissibility_bound)?;
    let eb = chart.bundle(bundle)?;
    let us = Section::of_bundle(chart, &eb, &u)?;
    let weighted = weighted_sobolev_norm(&us, l, p, weight)?;

    let map = picture.map.clone();
    let n = chart.dim();
    let twist = n as f64 * p.reciprocal();
    let (rho, f0) = (weight.rho.clone(), weight.f0.clone());
    let m2 = map.clone();
    let rho_t: ScalarFn = Arc::new(move |t| rho(&m2.at(t)));
    let m3 = map.clone();
    let w_of = move |t: &[f64]| -> Vec<C64> {
        let x = m3.at(t);
        let s = 1.0 / f0(&x);
        u(&x).into_iter().map(|v| v * s).collect()
    };

    let gt = pullback_metric(chart.metric(), &map);
    let bt = pullback_bundle(bundle, &map);
    let chart_g = Chart::new(picture.grid.clone(), gt.clone())?;
    let chart_0 = Chart::new(picture.grid.clone(), conformal_rescale(&gt, &rho_t, &picture.grid)?)?;
    let bg = chart_g.bundle(&bt)?;
    let b0 = chart_0.bundle(&bt)?;
    let tw: Vec<C64> = chart_0.sample(&rho_t).into_iter().map(|r| C64::new(r.powf(twist), 0.0)).collect();

    let mut v = Section::of_bundle(&chart_g, &bg, &w_of)?;
    let mut parts = Vec::with_capacity(l + 1);
    for j in 0..=l {
        if j > 0 {
            v = v.nabla()?;
        }
        let moved = Section::zeros(&chart_0, j, 0, &b0, &chart_0.line()).with_data(v.data().to_vec())?;
        parts.push(lp_norm(&moved.mul_scalar_field(&tw), p)?);
    }
    let twisted = p.combine(&parts);

    let classical_sec = Section::of_bundle(&chart_0, &b0, &w_of)?.mul_scalar_field(&tw);
    let classical = sobolev_norm(&classical_sec, l, p)?;
    Ok(ConformalReport {
        weighted,
        twisted,
        classical,
        ratio: twisted / weighted,
        classical_ratio: classical / weighted,
        admissibility,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplication_constant_recursion() {
        let two = Exponent::Finite(2.0);
        let inf = Exponent::Infinite;
        assert_eq!(multiplication_constant(0, inf, two, two).unwrap(), 1.0);
        assert!((multiplication_constant(1, inf, two, two).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        assert!((multiplication_constant(2, inf, two, two).unwrap() - 5.0).abs() < 1e-13);
        assert!(multiplication_constant(1, two, two, two).is_err());
        assert_eq!(multiplication_constant(3, inf, inf, inf).unwrap(), 8.0);
    }

    #[test]
    fn equivalence_constant_recursion() {
        assert_eq!(equivalence_constant(0, 2.0, 5.0).unwrap(), 1.0);
        assert!((equivalence_constant(1, 2.0, 0.0).unwrap() - 2.0).abs() < 1e-14);
        assert!((equivalence_constant(1, 2.0, 1.0).unwrap() - 6f64.sqrt()).abs() < 1e-14);
        // l = 2, p = 2, ||A|| = 1: 6 * 2 * (2 + 5) = 84.
        assert!((equivalence_constant(2, 2.0, 1.0).unwrap() - 84f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn multiplicity_of_boxes() {
        let b = |l: f64, u: f64| BoxSet { lower: vec![l, -1.0], upper: vec![u, 1.0] };
        assert_eq!(Covering { sets: vec![b(-1.0, 1.0)] }.multiplicity(), 1);
        assert_eq!(Covering { sets: vec![b(-1.0, 0.2), b(-0.2, 1.0)] }.multiplicity(), 2);
        assert_eq!(Covering { sets: vec![b(-1.0, 0.0), b(0.1, 1.0)] }.multiplicity(), 1);
        assert_eq!(Covering { sets: vec![b(-1.0, 0.5), b(-0.5, 1.0), b(0.0, 0.2)] }.multiplicity(), 3);
    }

    #[test]
    fn exponent_serde() {
        let e: Exponent = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(e, Exponent::Infinite);
        let e: Exponent = serde_json::from_str("2").unwrap();
        assert_eq!(e, Exponent::Finite(2.0));
        assert_eq!(serde_json::to_string(&Exponent::Infinite).unwrap(), "\"inf\"");
    }
}
