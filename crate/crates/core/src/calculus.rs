//! The covariant derivative engine and the operations built on it.
//!
//! For a field with lower slots `p`, upper slots `i`, output fiber `F` and
//! input fiber `E`,
//!
//! ```text
//! (nabla a)_{k,p;i} = d_k a_{p;i} - sum_s Gamma^m_{k p_s} a_{..m..;i}
//!                   + sum_s Gamma^{i_s}_{k m} a_{p;..m..} + A^F_k a - a A^E_k
//! ```
//!
//! with the new slot prepended on the left.

use crate::bundles::SampledBundle;
use crate::error::{Error, Result};
use crate::geometry::{divergence, VectorField};
use crate::section::{Chart, Section, ZERO};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use std::sync::Arc;

struct Layout {
    /// For each component: lower-slot digits, then upper-slot digits.
    digits: Vec<u16>,
    slot_stride: Vec<usize>,
    fout: Vec<u16>,
    fin: Vec<u16>,
    cols: usize,
    lower: usize,
    upper: usize,
}

impl Layout {
    fn new(n: usize, lower: usize, upper: usize, dout: usize, din: usize) -> Self {
        let rows = n.pow(lower as u32) * dout;
        let cols = n.pow(upper as u32) * din;
        let comps = rows * cols;
        let ns = lower + upper;
        let mut slot_stride = Vec::with_capacity(ns);
        for s in 0..lower {
            slot_stride.push(n.pow((lower - 1 - s) as u32) * dout * cols);
        }
        for s in 0..upper {
            slot_stride.push(n.pow((upper - 1 - s) as u32) * din);
        }
        let mut digits = Vec::with_capacity(comps * ns);
        let mut fout = Vec::with_capacity(comps);
        let mut fin = Vec::with_capacity(comps);
        for c in 0..comps {
            for st in &slot_stride {
                digits.push(((c / st) % n) as u16);
            }
            fout.push(((c / cols) % dout) as u16);
            fin.push((c % din) as u16);
        }
        Layout { digits, slot_stride, fout, fin, cols, lower, upper }
    }
}

impl Section {
    /// One covariant derivative; the new cotangent slot is leftmost.
    ///
    /// Compactly supported inputs must vanish on the outer stencil-radius
    /// layers of the grid, otherwise [`Error::SupportViolation`] is returned.
    pub fn nabla(&self) -> Result<Section> {
        let chart = self.chart().clone();
        let grid = chart.grid();
        let r = grid.fd_order().radius();
        if self.is_compact() {
            grid.check_support(self.data(), self.comps(), r)?;
        }
        Ok(nabla_raw(self))
    }

    /// `nabla^j`.
    pub fn nabla_iter(&self, j: usize) -> Result<Section> {
        let grid = self.chart().grid();
        let needed = j * grid.fd_order().radius();
        if self.is_compact() && grid.support_tol().is_some() && needed > grid.margin() {
            return Err(Error::MarginTooSmall { margin: grid.margin(), needed });
        }
        let mut u = self.clone();
        for _ in 0..j {
            u = u.nabla()?;
        }
        Ok(u)
    }

    /// `nabla_X = i_X . nabla` for a sampled vector field (`n` reals per point).
    pub fn directional(&self, x: &[f64]) -> Result<Section> {
        self.nabla()?.contract_first(x)
    }

    /// `nabla_X` for a closed-form vector field.
    pub fn directional_field(&self, x: &VectorField) -> Result<Section> {
        let xs = self.chart().sample_field(x);
        self.directional(&xs)
    }
}

fn nabla_raw(u: &Section) -> Section {
    let chart = u.chart().clone();
    let grid = chart.grid();
    let n = grid.dim();
    let sm = chart.sampled();
    let (out_b, in_b) = (u.out_bundle().clone(), u.in_bundle().clone());
    let lay = Layout::new(n, u.lower(), u.upper(), out_b.dim, in_b.dim);
    let c = u.comps();
    let nc = n * c;
    let mut res = Section::zeros(&chart, u.lower() + 1, u.upper(), &out_b, &in_b).with_compact(u.is_compact());
    let weights = grid.fd_order().weights();
    let src = u.data();
    let ns = lay.lower + lay.upper;
    let (dout, din) = (out_b.dim, in_b.dim);
    res.data_mut().par_chunks_mut(nc).enumerate().for_each(|(p, out)| {
        for k in 0..n {
            let blk = &mut out[k * c..(k + 1) * c];
            let stride = grid.strides()[k];
            let idx = grid.index_along(p, k);
            let len = grid.shape()[k];
            let inv_h = 1.0 / grid.spacing()[k];
            for (j, w) in weights.iter().enumerate() {
                let off = j + 1;
                let wj = w * inv_h;
                if idx + off < len {
                    let q = (p + off * stride) * c;
                    for (b, v) in blk.iter_mut().zip(&src[q..q + c]) {
                        *b += v * wj;
                    }
                }
                if idx >= off {
                    let q = (p - off * stride) * c;
                    for (b, v) in blk.iter_mut().zip(&src[q..q + c]) {
                        *b -= v * wj;
                    }
                }
            }
            let here = &src[p * c..(p + 1) * c];
            if !sm.flat && ns > 0 {
                let gam = sm.gamma_at(p);
                for cc in 0..c {
                    let mut acc = ZERO;
                    for s in 0..ns {
                        let a = lay.digits[cc * ns + s] as usize;
                        let st = lay.slot_stride[s] as isize;
                        for m in 0..n {
                            let src_c = (cc as isize + (m as isize - a as isize) * st) as usize;
                            let v = here[src_c];
                            if s < lay.lower {
                                acc -= v * gam[(m * n + k) * n + a];
                            } else {
                                acc += v * gam[(a * n + k) * n + m];
                            }
                        }
                    }
                    blk[cc] += acc;
                }
            }
            if !out_b.flat {
                let a = out_b.potential_at(p, k);
                for cc in 0..c {
                    let f = lay.fout[cc] as usize;
                    let base = cc - f * lay.cols;
                    let mut acc = ZERO;
                    for f2 in 0..dout {
                        acc += a[f * dout + f2] * here[base + f2 * lay.cols];
                    }
                    blk[cc] += acc;
                }
            }
            if !in_b.flat {
                let a = in_b.potential_at(p, k);
                for cc in 0..c {
                    let e = lay.fin[cc] as usize;
                    let base = cc - e;
                    let mut acc = ZERO;
                    for e2 in 0..din {
                        acc += here[base + e2] * a[e2 * din + e];
                    }
                    blk[cc] -= acc;
                }
            }
        }
    });
    res
}

/// `nabla_{i_1} .. nabla_{i_r} u` for 0-based coordinate indices, defined as
/// the component `(nabla^r u)(e_{i_1}, .., e_{i_r})`. On a flat metric this
/// is the iterated directional derivative along coordinate fields.
pub fn multiindex_derivative(u: &Section, idx: &[usize]) -> Result<Section> {
    let n = u.chart().dim();
    if let Some(bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::ShapeMismatch(format!("index {bad} outside 0..{n}")));
    }
    let mut v = u.nabla_iter(idx.len())?;
    for &i in idx {
        v = v.slot_component(i)?;
    }
    Ok(v)
}

/// Iterated coordinate directional derivatives `d_{i_1} + A_{i_1}` applied
/// right to left with no slot bookkeeping. Independent of
/// [`multiindex_derivative`]; equal to it on flat metrics.
pub fn coordinate_chain(u: &Section, idx: &[usize]) -> Result<Section> {
    let mut v = u.clone();
    for &i in idx.iter().rev() {
        v = v.nabla()?.slot_component(i)?;
    }
    Ok(v)
}

/// Reassembles `nabla^r u` from its multi-index components: `sum e*_I (x) nabla_I u`.
pub fn assemble_from_multiindex(u: &Section, r: usize) -> Result<Section> {
    let n = u.chart().dim();
    let template = u.nabla_iter(r)?;
    let mut out = template.scale(ZERO);
    let block = u.comps();
    let total = n.pow(r as u32);
    for flat in 0..total {
        let mut idx = vec![0; r];
        let mut t = flat;
        for s in (0..r).rev() {
            idx[s] = t % n;
            t /= n;
        }
        let comp = multiindex_derivative(u, &idx)?;
        let c_out = out.comps();
        let data = out.data_mut();
        for p in 0..u.chart().npts() {
            data[p * c_out + flat * block..p * c_out + (flat + 1) * block].copy_from_slice(comp.at(p));
        }
    }
    Ok(out)
}

/// Curvature `R_{kl} = d_k A_l - d_l A_k + [A_k, A_l]` sampled on the grid.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub n: usize,
    pub d: usize,
    /// `[p][k][l][a][b]`.
    pub data: Vec<C64>,
}

impl CurvatureField {
    pub fn at(&self, p: usize, k: usize, l: usize) -> DMatrix<C64> {
        let dd = self.d * self.d;
        let off = ((p * self.n + k) * self.n + l) * dd;
        DMatrix::from_row_slice(self.d, self.d, &self.data[off..off + dd])
    }

    /// `R_{kl}` as an endomorphism coefficient field.
    pub fn as_section(&self, chart: &Arc<Chart>, bundle: &Arc<SampledBundle>, k: usize, l: usize) -> Section {
        let dd = self.d * self.d;
        let mut s = Section::identity(chart, bundle);
        let data = s.data_mut();
        for p in 0..chart.npts() {
            let off = ((p * self.n + k) * self.n + l) * dd;
            data[p * dd..(p + 1) * dd].copy_from_slice(&self.data[off..off + dd]);
        }
        s
    }
}

pub fn curvature(chart: &Chart, bundle: &SampledBundle) -> CurvatureField {
    let n = chart.dim();
    let d = bundle.dim;
    let dd = d * d;
    let spec = &bundle.spec;
    let blocks: Vec<Vec<C64>> = (0..chart.npts())
        .into_par_iter()
        .map(|p| {
            let mut out = vec![ZERO; n * n * dd];
            if spec.is_flat() {
                return out;
            }
            let x = chart.grid().coords(p);
            let a = spec.potentials_at(&x);
            let da: Vec<Vec<C64>> = (0..n).map(|j| spec.potential_derivative(&x, j)).collect();
            for k in 0..n {
                for l in 0..n {
                    if k == l {
                        continue;
                    }
                    let ak = DMatrix::from_row_slice(d, d, &a[k * dd..(k + 1) * dd]);
                    let al = DMatrix::from_row_slice(d, d, &a[l * dd..(l + 1) * dd]);
                    let dkal = DMatrix::from_row_slice(d, d, &da[k][l * dd..(l + 1) * dd]);
                    let dlak = DMatrix::from_row_slice(d, d, &da[l][k * dd..(k + 1) * dd]);
                    let r = dkal - dlak + &ak * &al - &al * &ak;
                    let off = (k * n + l) * dd;
                    for i in 0..dd {
                        out[off + i] = r[(i / d, i % d)];
                    }
                }
            }
            out
        })
        .collect();
    CurvatureField { n, d, data: blocks.concat() }
}

/// `R(X, Y) = X^k Y^l R_{kl}` for sampled vector fields, as an End(E) field.
pub fn curvature_on(
    chart: &Arc<Chart>,
    bundle: &Arc<SampledBundle>,
    curv: &CurvatureField,
    x: &[f64],
    y: &[f64],
) -> Section {
    let n = chart.dim();
    let d = bundle.dim;
    let dd = d * d;
    let mut s = Section::identity(chart, bundle);
    let data = s.data_mut();
    for p in 0..chart.npts() {
        let blk = &mut data[p * dd..(p + 1) * dd];
        blk.iter_mut().for_each(|v| *v = ZERO);
        for k in 0..n {
            for l in 0..n {
                let w = x[p * n + k] * y[p * n + l];
                if w == 0.0 || k == l {
                    continue;
                }
                let off = ((p * n + k) * n + l) * dd;
                for i in 0..dd {
                    blk[i] += curv.data[off + i] * w;
                }
            }
        }
    }
    s
}

/// Divergence of a closed-form vector field at every grid point.
pub fn divergence_field(chart: &Chart, x: &VectorField) -> Result<Vec<f64>> {
    (0..chart.npts())
        .into_par_iter()
        .map(|p| divergence(x, chart.metric(), &chart.grid().coords(p)))
        .collect()
}

/// `nabla_X^* u = -nabla_X u - div(X) u`.
pub fn formal_adjoint_directional(u: &Section, x: &VectorField) -> Result<Section> {
    let chart = u.chart().clone();
    let div = divergence_field(&chart, x)?;
    let dx = u.directional_field(x)?;
    let divc: Vec<C64> = div.iter().map(|v| C64::new(*v, 0.0)).collect();
    let mut out = dx.scale(C64::new(-1.0, 0.0));
    out.axpy(C64::new(-1.0, 0.0), &u.mul_scalar_field(&divc))?;
    Ok(out)
}

/// `epsilon: E (x) E' (x) F -> F`, `(eps w)_f = sum_e w_{(e, e, f)}`; the
/// fiber index of `w` is `(e * d_E + e') * d_F + f`.
pub fn contract_epsilon(w: &Section, d_e: usize, f: &Arc<SampledBundle>) -> Result<Section> {
    let d_f = f.dim;
    if w.out_bundle().dim != d_e * d_e * d_f || w.upper() != 0 || w.in_bundle().dim != 1 {
        return Err(Error::ShapeMismatch(format!(
            "expected a section of E(x)E'(x)F with dims {d_e},{d_e},{d_f}"
        )));
    }
    let chart = w.chart().clone();
    let mut out = Section::zeros(&chart, w.lower(), 0, f, &chart.line()).with_compact(w.is_compact());
    let n = chart.dim();
    let blocks = n.pow(w.lower() as u32);
    let cw = w.comps();
    let co = out.comps();
    let src = w.data();
    out.data_mut().par_chunks_mut(co).enumerate().for_each(|(p, o)| {
        let s = &src[p * cw..(p + 1) * cw];
        for b in 0..blocks {
            for e in 0..d_e {
                for ff in 0..d_f {
                    o[b * d_f + ff] += s[b * d_e * d_e * d_f + (e * d_e + e) * d_f + ff];
                }
            }
        }
    });
    Ok(out)
}

/// Pointwise inner products `(u, v)(x)` with metric-induced slot metrics.
pub fn pointwise_inner(u: &Section, v: &Section) -> Result<Vec<C64>> {
    if u.comps() != v.comps() || u.lower() != v.lower() || u.upper() != v.upper() {
        return Err(Error::ShapeMismatch("inner product of differently shaped fields".into()));
    }
    let chart = u.chart();
    let (r, c) = (u.rows(), u.cols());
    let simple = chart.sampled().flat && u.out_bundle().metric.is_none() && u.in_bundle().metric.is_none();
    Ok((0..chart.npts())
        .into_par_iter()
        .map(|p| {
            let (a, b) = (u.at(p), v.at(p));
            if simple {
                return a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
            }
            let gr = u.row_gram(p);
            let gc = u.col_gram(p);
            // (u, v) = sum u_{ij} conj(Gr_{ik} Gc_{jl} v_{kl})
            let mut acc = ZERO;
            for i in 0..r {
                for j in 0..c {
                    let mut w = ZERO;
                    for k in 0..r {
                        let g1 = gr[i * r + k];
                        if g1 == ZERO {
                            continue;
                        }
                        for l in 0..c {
                            w += g1 * gc[j * c + l] * b[k * c + l];
                        }
                    }
                    acc += a[i * c + j] * w.conj();
                }
            }
            acc
        })
        .collect())
}

/// `int (u, v) dvol` by the trapezoid rule, summed in point order.
pub fn integrate_inner(u: &Section, v: &Section) -> Result<C64> {
    let w = pointwise_inner(u, v)?;
    let chart = u.chart();
    Ok(w.iter().enumerate().map(|(p, x)| x * chart.volume_weight(p)).sum())
}

/// `1 (x) u` style tensor product of sections `u` of `E` and `v` of `E1`
/// (no slots): fiber index `e * d_{E1} + f`.
pub fn tensor_product(u: &Section, v: &Section, bundle: &Arc<SampledBundle>) -> Result<Section> {
    if u.lower() != 0 || v.lower() != 0 || u.upper() != 0 || v.upper() != 0 {
        return Err(Error::ShapeMismatch("tensor_product expects slot-free sections".into()));
    }
    let (de, df) = (u.out_bundle().dim, v.out_bundle().dim);
    if bundle.dim != de * df {
        return Err(Error::ShapeMismatch("target bundle dimension".into()));
    }
    let chart = u.chart().clone();
    let mut out = Section::zeros(&chart, 0, 0, bundle, &chart.line()).with_compact(u.is_compact() || v.is_compact());
    out.data_mut().par_chunks_mut(de * df).enumerate().for_each(|(p, o)| {
        let (a, b) = (u.at(p), v.at(p));
        for e in 0..de {
            for f in 0..df {
                o[e * df + f] = a[e] * b[f];
            }
        }
    });
    Ok(out)
}

/// `max |nabla(a u) - (nabla a) u - (1 (x) a) nabla u| / max |nabla(a u)|`
/// over points at least `depth` layers inside, for a slot-free `a`.
pub fn leibniz_residual(a: &Section, u: &Section, depth: usize) -> Result<f64> {
    let au = Section::compose(a, u)?;
    let lhs = au.nabla()?;
    let mut rhs = Section::compose(&a.nabla()?.non_compact(), u)?;
    rhs = rhs.add(&Section::compose(&a.identity_tensor(), &u.nabla()?)?)?;
    Ok(lhs.sub(&rhs)?.max_abs_interior(depth) / lhs.max_abs_interior(depth))
}

/// `max |(nabla_(k,l) - nabla_(l,k)) u - R_kl u|` relative to the largest
/// second derivative, for a torsion-free base connection.
pub fn curvature_residual(u: &Section, curv: &CurvatureField, k: usize, l: usize, depth: usize) -> Result<f64> {
    let chart = u.chart().clone();
    let kl = multiindex_derivative(u, &[k, l])?;
    let lk = multiindex_derivative(u, &[l, k])?;
    let r = curv.as_section(&chart, u.out_bundle(), k, l);
    let lhs = kl.sub(&lk)?;
    let defect = lhs.sub(&Section::compose(&r, u)?)?;
    let scale = kl.max_abs_interior(depth).max(lk.max_abs_interior(depth));
    Ok(defect.max_abs_interior(depth) / scale)
}

/// `|int (nabla_X u, v) + int (u, (nabla_X + div X) v)| / (||u|| ||v||)`.
pub fn adjoint_pairing_defect(u: &Section, v: &Section, x: &VectorField) -> Result<f64> {
    let lhs = integrate_inner(&u.directional_field(x)?, v)?;
    let rhs = integrate_inner(u, &formal_adjoint_directional(v, x)?)?;
    let norm = |s: &Section| -> Result<f64> { Ok(integrate_inner(s, s)?.re.sqrt()) };
    Ok((lhs - rhs).norm() / (norm(u)? * norm(v)?))
}

/// `div X = |g|^{-1/2} d_k (|g|^{1/2} X^k)` with the grid stencil instead
/// of closed-form differencing. Exact up to `O(h^order)` at points whose
/// stencils stay inside the box.
pub fn divergence_on_grid(chart: &Arc<Chart>, x: &VectorField) -> Result<Vec<f64>> {
    let n = chart.dim();
    let xs = chart.sample_field(x);
    let sm = chart.sampled();
    let line = chart.line();
    let mut acc = vec![0.0; chart.npts()];
    for k in 0..n {
        let dens = Section::zeros(chart, 0, 0, &line, &line).non_compact();
        let data: Vec<C64> = (0..chart.npts()).map(|p| C64::new(sm.sqrt_det[p] * xs[p * n + k], 0.0)).collect();
        let d = dens.with_data(data)?.nabla()?.slot_component(k)?;
        for (a, v) in acc.iter_mut().zip(d.data()) {
            *a += v.re;
        }
    }
    Ok(acc.iter().enumerate().map(|(p, v)| v / sm.sqrt_det[p]).collect())
}
