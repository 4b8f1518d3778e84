//! Bidifferential operators in canonical form
//! `b(u, w) = sum_{i,j <= m} (a_ij nabla^i u, nabla^j w)`, their Dirichlet
//! forms, and the divergence-form operators `P = sum (nabla^j)^* a_ij nabla^i`
//! they induce through the quadrature pairing.

use crate::bundles::SampledBundle;
use crate::calculus::{divergence_field, integrate_inner, pointwise_inner};
use crate::error::{Error, Result};
use crate::generators::GeneratorSystem;
use crate::geometry::{conformal_rescale, WeightPair};
use crate::norms::{sobolev_norm, Exponent};
use crate::operators::{compose, slot_contraction, CoefficientClass, NablaOpSpec};
use crate::section::{Chart, Section};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Canonical coefficients `a_ij: T*^i (x) E -> T*^j (x) F`, stored as
/// fields with `j` lower and `i` upper slots.
#[derive(Clone, Debug)]
pub struct BidiffSpec {
    chart: Arc<Chart>,
    e: Arc<SampledBundle>,
    f: Arc<SampledBundle>,
    m: usize,
    coeffs: BTreeMap<(usize, usize), Section>,
    class: CoefficientClass,
}

impl BidiffSpec {
    pub fn new(
        chart: &Arc<Chart>,
        e: &Arc<SampledBundle>,
        f: &Arc<SampledBundle>,
        m: usize,
        coeffs: impl IntoIterator<Item = ((usize, usize), Section)>,
        class: CoefficientClass,
    ) -> Result<Self> {
        let mut spec = BidiffSpec { chart: chart.clone(), e: e.clone(), f: f.clone(), m, coeffs: BTreeMap::new(), class };
        for ((i, j), a) in coeffs {
            spec.insert(i, j, a)?;
        }
        Ok(spec)
    }

    fn insert(&mut self, i: usize, j: usize, a: Section) -> Result<()> {
        if i > self.m || j > self.m {
            return Err(Error::ShapeMismatch(format!("a_{i}{j} exceeds half-order {}", self.m)));
        }
        if !Arc::ptr_eq(a.chart(), &self.chart) {
            return Err(Error::ChartMismatch("coefficient on another chart".into()));
        }
        if a.lower() != j || a.upper() != i || a.out_bundle().dim != self.f.dim || a.in_bundle().dim != self.e.dim {
            return Err(Error::ShapeMismatch(format!("a_{i}{j} must have {j} lower and {i} upper slots")));
        }
        let a = a.with_bundles(&self.f, &self.e)?.non_compact();
        let a = match self.coeffs.remove(&(i, j)) {
            Some(b) => b.add(&a)?.non_compact(),
            None => a,
        };
        self.coeffs.insert((i, j), a);
        Ok(())
    }

    /// `a_00 = Id` on `E`: the `L^2` pairing.
    pub fn l2(chart: &Arc<Chart>, e: &Arc<SampledBundle>) -> Self {
        Self::new(chart, e, e, 0, [((0, 0), Section::identity(chart, e))], CoefficientClass::TotallyBounded)
            .expect("identity shape")
    }

    /// `a_11 = Id`: the Dirichlet energy `int (nabla u, nabla w)`.
    pub fn energy(chart: &Arc<Chart>, e: &Arc<SampledBundle>) -> Self {
        let id = Section::identity(chart, e).identity_tensor();
        Self::new(chart, e, e, 1, [((1, 1), id)], CoefficientClass::TotallyBounded).expect("identity shape")
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }
    pub fn half_order(&self) -> usize {
        self.m
    }
    pub fn class(&self) -> CoefficientClass {
        self.class
    }
    pub fn coefficients(&self) -> &BTreeMap<(usize, usize), Section> {
        &self.coeffs
    }
    pub fn source(&self) -> &Arc<SampledBundle> {
        &self.e
    }
    pub fn target(&self) -> &Arc<SampledBundle> {
        &self.f
    }
}

/// Pointwise `sum (a_ij nabla^i u, nabla^j w)`; conjugate-linear in `w`.
pub fn eval_bidiff(spec: &BidiffSpec, u: &Section, w: &Section) -> Result<Vec<C64>> {
    if u.out_bundle().dim != spec.e.dim || w.out_bundle().dim != spec.f.dim || u.lower() != 0 || w.lower() != 0 {
        return Err(Error::ShapeMismatch("sections do not match the bidifferential spec".into()));
    }
    let du = derivatives(u, spec.coeffs.keys().map(|k| k.0).max().unwrap_or(0))?;
    let dw = derivatives(w, spec.coeffs.keys().map(|k| k.1).max().unwrap_or(0))?;
    let mut acc = vec![C64::new(0.0, 0.0); spec.chart.npts()];
    for (&(i, j), a) in &spec.coeffs {
        let au = Section::compose(a, &du[i])?;
        let v = pointwise_inner(&au, &dw[j].clone().with_bundles(&spec.f, dw[j].in_bundle())?)?;
        acc.par_iter_mut().zip(v).for_each(|(s, x)| *s += x);
    }
    Ok(acc)
}

fn derivatives(u: &Section, top: usize) -> Result<Vec<Section>> {
    let mut out = vec![u.clone()];
    for _ in 0..top {
        let next = out.last().expect("nonempty").nabla()?;
        out.push(next);
    }
    Ok(out)
}

/// The Dirichlet form `B(u, w) = int b(u, w) dvol`.
pub fn dirichlet_form(spec: &BidiffSpec, u: &Section, w: &Section) -> Result<C64> {
    let v = eval_bidiff(spec, u, w)?;
    Ok(v.iter().enumerate().map(|(p, x)| x * spec.chart.volume_weight(p)).sum())
}

/// `b(u, w) = (P u, Q w)_G` in canonical form: `a_ij = (b^[j])^* a^[i]`.
/// The common target may carry lower slots, `G = T*^q (x) G'`.
pub fn bidiff_from_ops(p: &NablaOpSpec, q: &NablaOpSpec) -> Result<BidiffSpec> {
    if p.slots().0 != 0 || q.slots().0 != 0 || p.slots().1 != q.slots().1 {
        return Err(Error::ShapeMismatch("P and Q must act on sections and land in the same slot count".into()));
    }
    if p.target().dim != q.target().dim || !Arc::ptr_eq(p.chart(), q.chart()) {
        return Err(Error::ShapeMismatch("P and Q must share the target bundle and chart".into()));
    }
    let g = p.target();
    let m = p.order().max(q.order());
    let mut spec = BidiffSpec {
        chart: p.chart().clone(),
        e: p.source().clone(),
        f: q.source().clone(),
        m,
        coeffs: BTreeMap::new(),
        class: p.class().meet(q.class()),
    };
    for (&j, b) in q.coefficients() {
        let bstar = b.clone().with_bundles(g, q.source())?.metric_adjoint()?;
        for (&i, a) in p.coefficients() {
            let a = a.clone().with_bundles(g, p.source())?;
            spec.insert(i, j, Section::compose(&bstar, &a)?)?;
        }
    }
    Ok(spec)
}

/// How `nabla^*` is realized.
#[derive(Clone, Copy, Debug)]
pub enum AdjointRoute<'a> {
    /// `-sum_i (nabla_{Z_i} + div Z_i) i_{Z_i}` over an isometric generator system.
    Generators(&'a GeneratorSystem),
    /// `-tr_g nabla`, the metric trace; kept as an independent oracle.
    Trace,
}

/// `nabla^*` from fields with `q + 1` lower slots to fields with `q`.
pub fn nabla_adjoint(chart: &Arc<Chart>, f: &Arc<SampledBundle>, q: usize, route: AdjointRoute) -> Result<NablaOpSpec> {
    match route {
        AdjointRoute::Trace => {
            let n = chart.dim();
            let inner = n.pow(q as u32) * f.dim;
            let cols = n * n * inner;
            let mut a = Section::zeros(chart, q, q + 2, f, f).non_compact();
            let sm = chart.sampled();
            a.data_mut().par_chunks_mut(inner * cols).enumerate().for_each(|(p, o)| {
                let gi = sm.ginv_at(p);
                for row in 0..inner {
                    for k in 0..n {
                        for l in 0..n {
                            o[row * cols + (k * n + l) * inner + row] = C64::new(-gi[k * n + l], 0.0);
                        }
                    }
                }
            });
            NablaOpSpec::new(chart, f, f, q + 1, q, [(1, a)], CoefficientClass::TotallyBounded)
        }
        AdjointRoute::Generators(gens) => {
            if !Arc::ptr_eq(gens.chart(), chart) {
                return Err(Error::ChartMismatch("generators live on another chart".into()));
            }
            if !gens.embedding().is_isometric() {
                return Err(Error::Config("nabla^* through generators needs an isometric embedding".into()));
            }
            let mut acc = NablaOpSpec::new(chart, f, f, q + 1, q, [], CoefficientClass::TotallyBounded)?;
            for i in 0..gens.count() {
                let z = gens.z_samples(i);
                let c = slot_contraction(chart, f, &z, q);
                let div: Vec<C64> = divergence_field(chart, gens.field(i))?.into_iter().map(|v| C64::new(-v, 0.0)).collect();
                let along = NablaOpSpec::new(chart, f, f, q, q, [(1, c.scale(C64::new(-1.0, 0.0)))], CoefficientClass::TotallyBounded)?;
                let along = along.add(&NablaOpSpec::new(
                    chart,
                    f,
                    f,
                    q,
                    q,
                    [(0, scalar_times_identity(chart, f, q, &div))],
                    CoefficientClass::TotallyBounded,
                )?)?;
                let contract = NablaOpSpec::new(chart, f, f, q + 1, q, [(0, c)], CoefficientClass::TotallyBounded)?;
                acc = acc.add(&compose(&along, &contract)?)?;
            }
            Ok(acc)
        }
    }
}

/// `s(x) Id` on `T*^q (x) F`.
fn scalar_times_identity(chart: &Arc<Chart>, f: &Arc<SampledBundle>, q: usize, s: &[C64]) -> Section {
    let mut id = Section::scalar_identity(chart, f, s);
    for _ in 0..q {
        id = id.identity_tensor();
    }
    id
}

/// `P_b = sum_{ij} (nabla^j)^* a_ij nabla^i`, so that `<P_b u, w> = B(u, w)`
/// for compactly supported `u`, `w`.
pub fn assemble_divergence_form(spec: &BidiffSpec, route: AdjointRoute) -> Result<NablaOpSpec> {
    let chart = &spec.chart;
    let mut acc = NablaOpSpec::new(chart, &spec.e, &spec.f, 0, 0, [], spec.class)?;
    let mut adjoints: Vec<NablaOpSpec> = Vec::new();
    for q in 0..spec.m {
        adjoints.push(nabla_adjoint(chart, &spec.f, q, route)?);
    }
    for (&(i, j), a) in &spec.coeffs {
        let mut op = NablaOpSpec::nabla_power(chart, &spec.e, i)?;
        op = compose(&NablaOpSpec::new(chart, &spec.e, &spec.f, i, j, [(0, a.clone())], spec.class)?, &op)?;
        for q in (0..j).rev() {
            op = compose(&adjoints[q], &op)?;
        }
        acc = acc.add(&op)?;
    }
    Ok(acc)
}

/// `<P_b u, w>` against `B(u, w)`, relative to `||u||_{H^m} ||w||_{H^m}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DualityReport {
    pub pairing: C64,
    pub form: C64,
    pub residual: f64,
    pub scale: f64,
    pub passed: bool,
}

pub fn duality_check(spec: &BidiffSpec, p: &NablaOpSpec, u: &Section, w: &Section, tol: f64) -> Result<DualityReport> {
    let pairing = integrate_inner(&p.apply(u)?, w)?;
    let form = dirichlet_form(spec, u, w)?;
    let two = Exponent::Finite(2.0);
    let scale = sobolev_norm(u, spec.m, two)? * sobolev_norm(w, spec.m, two)?;
    let residual = (pairing - form).norm() / scale;
    Ok(DualityReport { pairing, form, residual, scale, passed: residual <= tol })
}

/// The same pairing computed in the `g0 = rho^{-2} g` picture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightedDualityReport {
    /// `B(u, w)` in the metric `g`.
    pub form: C64,
    /// `int (rho^{n/2} f0^{-1} P_b u, rho^{n/2} f0 w) dvol_{g0}`.
    pub pictured: C64,
    pub ratio: C64,
    pub residual: f64,
    pub passed: bool,
}

/// Compares the Dirichlet form in `g` with the pairing of the twisted
/// sections `rho^{n/2} f0^{-1} P_b u` and `rho^{n/2} f0 w` in the `g0` picture.
pub fn weighted_duality_check(
    spec: &BidiffSpec,
    p: &NablaOpSpec,
    weight: &WeightPair,
    u: &Section,
    w: &Section,
    tol: f64,
) -> Result<WeightedDualityReport> {
    let chart = &spec.chart;
    let grid = chart.grid().clone();
    weight.validate(&grid)?;
    let g0 = conformal_rescale(chart.metric(), &weight.rho, &grid)?;
    let chart0 = Chart::new(grid, g0)?;
    let half = chart.dim() as f64 / 2.0;
    let rho = chart.sample(&weight.rho);
    let f0 = chart.sample(&weight.f0);
    let pu = p.apply(u)?;
    let a: Vec<C64> = pointwise_inner(&pu, w)?;
    // The fiber metric of E does not see g, so the twisted pairing is a
    // pointwise rescaling of (P u, w) by rho^n f0^{-1} f0.
    let pictured: C64 = a
        .iter()
        .enumerate()
        .map(|(q, v)| {
            let twist_u = rho[q].powf(half) / f0[q];
            let twist_w = rho[q].powf(half) * f0[q];
            v * twist_u * twist_w * chart0.volume_weight(q)
        })
        .sum();
    let form = dirichlet_form(spec, u, w)?;
    let ratio = pictured / form;
    let residual = (pictured - form).norm() / form.norm().max(f64::MIN_POSITIVE);
    Ok(WeightedDualityReport { form, pictured, ratio, residual, passed: residual <= tol })
}
