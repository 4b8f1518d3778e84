//! Grid-sampled tensor fields and the chart they live on.
//!
//! A [`Section`] is a field of `Hom(T*^{(x)u} (x) E_in, T*^{(x)l} (x) E_out)`,
//! stored per point as a row-major matrix whose rows are indexed by
//! `(p_1..p_l, f)` and columns by `(i_1..i_u, e)`. Ordinary sections of
//! `T*^{(x)r} (x) E` are the case `u = 0` with the trivial line as `E_in`.
//! Leftmost slots are most significant, so prepending a cotangent slot
//! (one application of nabla) keeps earlier data contiguous.

use crate::bundles::{BundleSpec, SampledBundle};
use crate::error::{Error, Result};
use crate::geometry::{MetricField, SampledMetric, ScalarFn, VectorField};
use crate::grid::ChartGrid;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::sync::Arc;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// A grid together with a sampled metric.
#[derive(Debug)]
pub struct Chart {
    grid: ChartGrid,
    metric: MetricField,
    sampled: SampledMetric,
    line: Arc<SampledBundle>,
}

impl Chart {
    pub fn new(grid: ChartGrid, metric: MetricField) -> Result<Arc<Self>> {
        let sampled = SampledMetric::new(&grid, &metric)?;
        let line = Arc::new(SampledBundle::new(&grid, &BundleSpec::trivial(grid.dim()))?);
        Ok(Arc::new(Chart { grid, metric, sampled, line }))
    }

    pub fn euclidean(grid: ChartGrid) -> Result<Arc<Self>> {
        let n = grid.dim();
        Self::new(grid, MetricField::euclidean(n))
    }

    pub fn grid(&self) -> &ChartGrid {
        &self.grid
    }
    pub fn metric(&self) -> &MetricField {
        &self.metric
    }
    pub fn sampled(&self) -> &SampledMetric {
        &self.sampled
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn npts(&self) -> usize {
        self.grid.npts()
    }
    /// The trivial line bundle sampled on this chart.
    pub fn line(&self) -> Arc<SampledBundle> {
        self.line.clone()
    }

    pub fn bundle(&self, spec: &BundleSpec) -> Result<Arc<SampledBundle>> {
        Ok(Arc::new(SampledBundle::new(&self.grid, spec)?))
    }

    /// Quadrature weight `w_p * sqrt(det g)` at point `p`.
    #[inline]
    pub fn volume_weight(&self, p: usize) -> f64 {
        self.grid.trapezoid_weight(p) * self.sampled.sqrt_det[p]
    }

    /// Samples a scalar function at every grid point.
    pub fn sample(&self, f: &ScalarFn) -> Vec<f64> {
        (0..self.npts()).into_par_iter().map(|p| f(&self.grid.coords(p))).collect()
    }

    /// Samples a vector field, `n` values per point.
    pub fn sample_field(&self, x: &VectorField) -> Vec<f64> {
        let chunks: Vec<Vec<f64>> = (0..self.npts()).into_par_iter().map(|p| x.at(&self.grid.coords(p))).collect();
        chunks.concat()
    }
}

/// Number of worker threads: `NABLA_CALC_THREADS` if set, otherwise rayon's default.
pub fn configure_threads() {
    if let Some(k) = std::env::var("NABLA_CALC_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
}

/// A grid-sampled tensor field; see the module docs for the layout.
#[derive(Clone, Debug)]
pub struct Section {
    chart: Arc<Chart>,
    lower: usize,
    upper: usize,
    out: Arc<SampledBundle>,
    inn: Arc<SampledBundle>,
    compact: bool,
    data: Vec<C64>,
}

impl Section {
    /// All-zero field with the given slot counts and bundles.
    pub fn zeros(
        chart: &Arc<Chart>,
        lower: usize,
        upper: usize,
        out: &Arc<SampledBundle>,
        inn: &Arc<SampledBundle>,
    ) -> Self {
        let n = chart.dim();
        let comps = n.pow((lower + upper) as u32) * out.dim * inn.dim;
        Section {
            chart: chart.clone(),
            lower,
            upper,
            out: out.clone(),
            inn: inn.clone(),
            compact: true,
            data: vec![ZERO; comps * chart.npts()],
        }
    }

    /// Samples `f(x)` (one value per component) at every point. The result
    /// is flagged compactly supported, so derivatives check that it vanishes
    /// near the box faces.
    pub fn from_fn(
        chart: &Arc<Chart>,
        lower: usize,
        upper: usize,
        out: &Arc<SampledBundle>,
        inn: &Arc<SampledBundle>,
        f: impl Fn(&[f64]) -> Vec<C64> + Sync,
    ) -> Result<Self> {
        if out.npts != chart.npts() || inn.npts != chart.npts() {
            return Err(Error::ChartMismatch("bundle was sampled on a different grid".into()));
        }
        let mut s = Self::zeros(chart, lower, upper, out, inn);
        let c = s.comps();
        let grid = chart.grid();
        let bad = std::sync::atomic::AtomicBool::new(false);
        s.data.par_chunks_mut(c).enumerate().for_each(|(p, chunk)| {
            let v = f(&grid.coords(p));
            if v.len() != c {
                bad.store(true, std::sync::atomic::Ordering::Relaxed);
                return;
            }
            chunk.copy_from_slice(&v);
        });
        if bad.into_inner() {
            return Err(Error::ShapeMismatch(format!("closure must return {c} components")));
        }
        Ok(s)
    }

    /// A section of `E` (no slots).
    pub fn of_bundle(
        chart: &Arc<Chart>,
        bundle: &Arc<SampledBundle>,
        f: impl Fn(&[f64]) -> Vec<C64> + Sync,
    ) -> Result<Self> {
        Self::from_fn(chart, 0, 0, bundle, &chart.line(), f)
    }

    /// A coefficient field that need not vanish near the box faces. Its
    /// derivatives are exact only at points whose stencils stay inside the
    /// box; products with compactly supported sections are unaffected.
    pub fn coefficient(
        chart: &Arc<Chart>,
        lower: usize,
        upper: usize,
        out: &Arc<SampledBundle>,
        inn: &Arc<SampledBundle>,
        f: impl Fn(&[f64]) -> Vec<C64> + Sync,
    ) -> Result<Self> {
        Ok(Self::from_fn(chart, lower, upper, out, inn, f)?.non_compact())
    }

    /// Identity endomorphism of `E` as a coefficient field.
    pub fn identity(chart: &Arc<Chart>, bundle: &Arc<SampledBundle>) -> Self {
        let d = bundle.dim;
        let mut s = Self::zeros(chart, 0, 0, bundle, bundle).non_compact();
        for p in 0..chart.npts() {
            for a in 0..d {
                s.data[p * d * d + a * d + a] = C64::new(1.0, 0.0);
            }
        }
        s
    }

    /// Scalar multiple of the identity of `E`, `f(x) Id`.
    pub fn scalar_identity(chart: &Arc<Chart>, bundle: &Arc<SampledBundle>, f: &[C64]) -> Self {
        let d = bundle.dim;
        let mut s = Self::zeros(chart, 0, 0, bundle, bundle).non_compact();
        for p in 0..chart.npts() {
            for a in 0..d {
                s.data[p * d * d + a * d + a] = f[p];
            }
        }
        s
    }

    pub fn non_compact(mut self) -> Self {
        self.compact = false;
        self
    }

    pub fn with_compact(mut self, compact: bool) -> Self {
        self.compact = compact;
        self
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }
    pub fn lower(&self) -> usize {
        self.lower
    }
    pub fn upper(&self) -> usize {
        self.upper
    }
    pub fn out_bundle(&self) -> &Arc<SampledBundle> {
        &self.out
    }
    pub fn in_bundle(&self) -> &Arc<SampledBundle> {
        &self.inn
    }
    pub fn is_compact(&self) -> bool {
        self.compact
    }
    pub fn data(&self) -> &[C64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }
    pub fn rows(&self) -> usize {
        self.chart.dim().pow(self.lower as u32) * self.out.dim
    }
    pub fn cols(&self) -> usize {
        self.chart.dim().pow(self.upper as u32) * self.inn.dim
    }
    pub fn comps(&self) -> usize {
        self.rows() * self.cols()
    }
    #[inline]
    pub fn at(&self, p: usize) -> &[C64] {
        let c = self.comps();
        &self.data[p * c..(p + 1) * c]
    }

    fn same_shape(&self, o: &Section) -> Result<()> {
        if !Arc::ptr_eq(&self.chart, &o.chart) {
            return Err(Error::ChartMismatch("sections live on different charts".into()));
        }
        if self.lower != o.lower || self.upper != o.upper || self.out.dim != o.out.dim || self.inn.dim != o.inn.dim {
            return Err(Error::ShapeMismatch(format!(
                "({},{},{},{}) vs ({},{},{},{})",
                self.lower, self.upper, self.out.dim, self.inn.dim, o.lower, o.upper, o.out.dim, o.inn.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, o: &Section) -> Result<Section> {
        self.same_shape(o)?;
        let mut s = self.clone();
        s.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += b);
        s.compact = self.compact && o.compact;
        Ok(s)
    }

    pub fn sub(&self, o: &Section) -> Result<Section> {
        self.same_shape(o)?;
        let mut s = self.clone();
        s.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a -= b);
        s.compact = self.compact && o.compact;
        Ok(s)
    }

    /// `self += c * o`.
    pub fn axpy(&mut self, c: C64, o: &Section) -> Result<()> {
        self.same_shape(o)?;
        self.data.iter_mut().zip(&o.data).for_each(|(a, b)| *a += c * b);
        self.compact = self.compact && o.compact;
        Ok(())
    }

    pub fn scale(&self, c: C64) -> Section {
        let mut s = self.clone();
        s.data.iter_mut().for_each(|a| *a *= c);
        s
    }

    /// Pointwise product with a complex scalar field.
    pub fn mul_scalar_field(&self, f: &[C64]) -> Section {
        let c = self.comps();
        let mut s = self.clone();
        s.data.par_chunks_mut(c).enumerate().for_each(|(p, ch)| ch.iter_mut().for_each(|v| *v *= f[p]));
        s
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest modulus over points at least `depth` layers inside the box.
    pub fn max_abs_interior(&self, depth: usize) -> f64 {
        let c = self.comps();
        let g = self.chart.grid();
        (0..self.chart.npts())
            .filter(|&p| g.depth(p) >= depth)
            .map(|p| self.data[p * c..(p + 1) * c].iter().map(|v| v.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    }

    /// Pointwise matrix product `a . u`: contracts the upper slots and input
    /// fiber of `a` against the lower slots and output fiber of `u`.
    pub fn compose(a: &Section, u: &Section) -> Result<Section> {
        if !Arc::ptr_eq(&a.chart, &u.chart) {
            return Err(Error::ChartMismatch("sections live on different charts".into()));
        }
        if a.upper != u.lower || a.inn.dim != u.out.dim {
            return Err(Error::ShapeMismatch(format!(
                "cannot apply a field with {} upper slots on fiber {} to one with {} lower slots on fiber {}",
                a.upper, a.inn.dim, u.lower, u.out.dim
            )));
        }
        let mut s = Section::zeros(&a.chart, a.lower, u.upper, &a.out, &u.inn);
        s.compact = a.compact || u.compact;
        let (r, k, c) = (a.rows(), a.cols(), u.cols());
        let (ca, cu, cs) = (a.comps(), u.comps(), s.comps());
        s.data.par_chunks_mut(cs).enumerate().for_each(|(p, out)| {
            let am = &a.data[p * ca..(p + 1) * ca];
            let um = &u.data[p * cu..(p + 1) * cu];
            for i in 0..r {
                for m in 0..k {
                    let aim = am[i * k + m];
                    if aim == ZERO {
                        continue;
                    }
                    for j in 0..c {
                        out[i * c + j] += aim * um[m * c + j];
                    }
                }
            }
        });
        Ok(s)
    }

    /// `1 (x) c`: prepends one lower and one upper slot joined by a delta.
    pub fn identity_tensor(&self) -> Section {
        let n = self.chart.dim();
        let mut s = Section::zeros(&self.chart, self.lower + 1, self.upper + 1, &self.out, &self.inn);
        s.compact = self.compact;
        let (r, c) = (self.rows(), self.cols());
        let (cs, co) = (s.comps(), self.comps());
        let sc = n * c;
        s.data.par_chunks_mut(cs).enumerate().for_each(|(p, out)| {
            let src = &self.data[p * co..(p + 1) * co];
            for k in 0..n {
                for i in 0..r {
                    let row = k * r + i;
                    let col0 = k * c;
                    out[row * sc + col0..row * sc + col0 + c].copy_from_slice(&src[i * c..(i + 1) * c]);
                }
            }
        });
        s
    }

    /// Contraction of the leftmost lower slot with a sampled vector field
    /// (`n` reals per point): `i_X`.
    pub fn contract_first(&self, x: &[f64]) -> Result<Section> {
        if self.lower == 0 {
            return Err(Error::ShapeMismatch("no lower slot to contract".into()));
        }
        let n = self.chart.dim();
        let mut s = Section::zeros(&self.chart, self.lower - 1, self.upper, &self.out, &self.inn);
        s.compact = self.compact;
        let cs = s.comps();
        let co = self.comps();
        s.data.par_chunks_mut(cs).enumerate().for_each(|(p, out)| {
            let src = &self.data[p * co..(p + 1) * co];
            for k in 0..n {
                let xk = x[p * n + k];
                if xk == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(&src[k * cs..(k + 1) * cs]) {
                    *o += v * xk;
                }
            }
        });
        Ok(s)
    }

    /// Block of components with leftmost lower index fixed to `k`.
    pub fn slot_component(&self, k: usize) -> Result<Section> {
        let n = self.chart.dim();
        let mut x = vec![0.0; n * self.chart.npts()];
        for p in 0..self.chart.npts() {
            x[p * n + k] = 1.0;
        }
        self.contract_first(&x)
    }

    /// Metric Gram matrix of the row space at point `p` (rows: lower slots
    /// with `g^{-1}`, then the output fiber metric), dense.
    pub fn row_gram(&self, p: usize) -> Vec<C64> {
        gram(&self.chart, p, self.lower, &self.out, false)
    }

    /// Gram matrix used for the column index in the pointwise
    /// Hilbert-Schmidt norm: `g` on upper slots, `(H_in^{-1})^T` on the fiber.
    pub fn col_gram(&self, p: usize) -> Vec<C64> {
        gram(&self.chart, p, self.upper, &self.inn, true)
    }

    /// Pointwise adjoint `a^* = G_cols^{-1} a^H G_rows` of a Hom field, for
    /// the inner products `(u, v) = v^H G u` on both sides.
    pub fn metric_adjoint(&self) -> Result<Section> {
        let (r, c) = (self.rows(), self.cols());
        // The adjoint maps T*^{lower} (x) E_out back to T*^{upper} (x) E_in.
        let mut s = Section::zeros(&self.chart, self.upper, self.lower, &self.inn, &self.out);
        s.compact = self.compact;
        let cs = s.comps();
        let co = self.comps();
        let simple = self.chart.sampled().flat && self.out.metric.is_none() && self.inn.metric.is_none();
        let res: Vec<Result<()>> = s
            .data
            .par_chunks_mut(cs)
            .enumerate()
            .map(|(p, out)| {
                let a = nalgebra::DMatrix::from_row_slice(r, c, &self.data[p * co..(p + 1) * co]);
                let ah = a.adjoint();
                let m = if simple {
                    ah
                } else {
                    let gw = nalgebra::DMatrix::from_row_slice(r, r, &gram(&self.chart, p, self.lower, &self.out, false));
                    let gv = nalgebra::DMatrix::from_row_slice(c, c, &gram(&self.chart, p, self.upper, &self.inn, false));
                    let gvi = gv.try_inverse().ok_or(Error::SingularMetric { at: self.chart.grid().coords(p), ratio: 0.0 })?;
                    gvi * ah * gw
                };
                for i in 0..c {
                    for j in 0..r {
                        out[i * r + j] = m[(i, j)];
                    }
                }
                Ok(())
            })
            .collect();
        for r in res {
            r?;
        }
        Ok(s)
    }

    /// Same values viewed over other bundles of equal fiber dimensions.
    pub fn with_bundles(mut self, out: &Arc<SampledBundle>, inn: &Arc<SampledBundle>) -> Result<Section> {
        if out.dim != self.out.dim || inn.dim != self.inn.dim {
            return Err(Error::ShapeMismatch("bundle dimensions differ".into()));
        }
        self.out = out.clone();
        self.inn = inn.clone();
        Ok(self)
    }

    /// Replaces the values (same layout).
    pub fn with_data(mut self, data: Vec<C64>) -> Result<Section> {
        if data.len() != self.data.len() {
            return Err(Error::ShapeMismatch("data length".into()));
        }
        self.data = data;
        Ok(self)
    }
}

/// Dense Gram matrix of `T*^{slots} (x) E` (if `tangent` is false) or of
/// `T^{slots} (x) E*`-style column spaces (if true) at point `p`.
fn gram(chart: &Chart, p: usize, slots: usize, bundle: &SampledBundle, tangent: bool) -> Vec<C64> {
    if tangent {
        return gram_plain(chart, p, slots, bundle);
    }
    let n = chart.dim();
    let gi = chart.sampled().ginv_at(p);
    let d = bundle.dim;
    let h: Vec<C64> = match bundle.metric_at(p) {
        Some(m) => m.to_vec(),
        None => (0..d * d).map(|i| if i / d == i % d { C64::new(1.0, 0.0) } else { ZERO }).collect(),
    };
    kron_slots(n, slots, gi, d, &h)
}

// Column space of a Hom field: tangent slots use `g`, the input fiber uses
// the transpose of the inverse fiber metric.
fn gram_plain(chart: &Chart, p: usize, slots: usize, bundle: &SampledBundle) -> Vec<C64> {
    let n = chart.dim();
    let g = chart.sampled().g_at(p);
    let d = bundle.dim;
    let h: Vec<C64> = match bundle.metric_at(p) {
        Some(m) => {
            let mm = nalgebra::DMatrix::from_row_slice(d, d, m);
            let inv = mm.try_inverse().expect("fiber metric invertible").transpose();
            (0..d * d).map(|i| inv[(i / d, i % d)]).collect()
        }
        None => (0..d * d).map(|i| if i / d == i % d { C64::new(1.0, 0.0) } else { ZERO }).collect(),
    };
    kron_slots(n, slots, g, d, &h)
}

fn kron_slots(n: usize, slots: usize, m: &[f64], d: usize, h: &[C64]) -> Vec<C64> {
    let mut acc: Vec<C64> = vec![C64::new(1.0, 0.0)];
    let mut size = 1;
    for _ in 0..slots {
        let mut next = vec![ZERO; size * n * size * n];
        let ns = size * n;
        for a in 0..size {
            for b in 0..size {
                let v = acc[a * size + b];
                if v == ZERO {
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        next[(a * n + i) * ns + b * n + j] = v * m[i * n + j];
                    }
                }
            }
        }
        acc = next;
        size = ns;
    }
    let total = size * d;
    let mut out = vec![ZERO; total * total];
    for a in 0..size {
        for b in 0..size {
            let v = acc[a * size + b];
            if v == ZERO {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    out[(a * d + i) * total + b * d + j] = v * h[i * d + j];
                }
            }
        }
    }
    out
}
