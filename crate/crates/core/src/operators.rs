//! `nabla`-differential operators `sum_j a^[j] nabla^j` and mixed operators
//! `sum a nabla_{X_1} .. nabla_{X_r}` as data, with application,
//! composition and rewriting between the two forms.
//!
//! Operators are compared by applying them to test sections. Coefficients
//! of a given operator are not unique, so two specs may differ and still
//! induce the same map.

use crate::bundles::SampledBundle;
use crate::calculus::{curvature, curvature_on, CurvatureField};
use crate::error::{Error, Result};
use crate::generators::{structure_functions, tuples, GeneratorSystem, StructureFunctions};
use crate::geometry::VectorField;
use crate::norms::{multiplication_constant, pointwise_norm, sobolev_norm, Exponent};
use crate::samples::{random_coefficient, random_section, trial_rng};
use rand::Rng;
use crate::section::{Chart, Section};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;

/// Regularity class of the coefficients. Totally bounded means bounded
/// with all covariant derivatives; it is declared, not verified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum CoefficientClass {
    Smooth,
    TotallyBounded,
}

impl CoefficientClass {
    pub fn meet(self, o: Self) -> Self {
        self.min(o)
    }
}

/// `P = sum_j a^[j] nabla^j` from fields with `q_in` lower slots in `E` to
/// fields with `q_out` lower slots in `F`. `a^[j]` has `q_out` lower and
/// `j + q_in` upper slots.
#[derive(Clone, Debug)]
pub struct NablaOpSpec {
    chart: Arc<Chart>,
    e: Arc<SampledBundle>,
    f: Arc<SampledBundle>,
    q_in: usize,
    q_out: usize,
    coeffs: BTreeMap<usize, Section>,
    class: CoefficientClass,
}

impl NablaOpSpec {
    pub fn new(
        chart: &Arc<Chart>,
        e: &Arc<SampledBundle>,
        f: &Arc<SampledBundle>,
        q_in: usize,
        q_out: usize,
        coeffs: impl IntoIterator<Item = (usize, Section)>,
        class: CoefficientClass,
    ) -> Result<Self> {
        let mut spec = NablaOpSpec {
            chart: chart.clone(),
            e: e.clone(),
            f: f.clone(),
            q_in,
            q_out,
            coeffs: BTreeMap::new(),
            class,
        };
        for (j, a) in coeffs {
            spec.add_coeff(j, a)?;
        }
        Ok(spec)
    }

    /// The zeroth-order operator `u -> a u` for a Hom field without slots.
    pub fn multiplication(a: &Section, class: CoefficientClass) -> Result<Self> {
        Self::new(a.chart(), a.in_bundle(), a.out_bundle(), 0, 0, [(0, a.clone())], class)
    }

    pub fn identity(chart: &Arc<Chart>, e: &Arc<SampledBundle>) -> Self {
        Self::multiplication(&Section::identity(chart, e), CoefficientClass::TotallyBounded).expect("identity shape")
    }

    /// `nabla_X = i_X . nabla` on sections of `E`.
    pub fn directional(chart: &Arc<Chart>, e: &Arc<SampledBundle>, x: &[f64], class: CoefficientClass) -> Self {
        Self::new(chart, e, e, 0, 0, [(1, contraction_coeff(chart, e, x))], class).expect("contraction shape")
    }

    /// `nabla` itself, from sections of `E` to `T*M (x) E`.
    pub fn nabla(chart: &Arc<Chart>, e: &Arc<SampledBundle>) -> Self {
        Self::nabla_on(chart, e, 0)
    }

    /// `nabla` on fields with `q` lower slots.
    pub fn nabla_on(chart: &Arc<Chart>, e: &Arc<SampledBundle>, q: usize) -> Self {
        let mut id = Section::identity(chart, e);
        for _ in 0..=q {
            id = id.identity_tensor();
        }
        Self::new(chart, e, e, q, q + 1, [(1, id)], CoefficientClass::TotallyBounded).expect("nabla shape")
    }

    /// `nabla^j` on sections of `E`.
    pub fn nabla_power(chart: &Arc<Chart>, e: &Arc<SampledBundle>, j: usize) -> Result<Self> {
        let mut op = Self::identity(chart, e);
        for q in 0..j {
            op = compose(&Self::nabla_on(chart, e, q), &op)?;
        }
        Ok(op)
    }

    /// The Bochner Laplacian `tr_g nabla^2` on sections of `E`.
    pub fn laplacian(chart: &Arc<Chart>, e: &Arc<SampledBundle>) -> Self {
        let n = chart.dim();
        let d = e.dim;
        let mut a = Section::zeros(chart, 0, 2, e, e).non_compact();
        let cols = n * n * d;
        let sm = chart.sampled();
        a.data_mut().par_chunks_mut(d * cols).enumerate().for_each(|(p, o)| {
            let gi = sm.ginv_at(p);
            for f in 0..d {
                for k in 0..n {
                    for l in 0..n {
                        o[f * cols + (k * n + l) * d + f] = C64::new(gi[k * n + l], 0.0);
                    }
                }
            }
        });
        Self::new(chart, e, e, 0, 0, [(2, a)], CoefficientClass::TotallyBounded).expect("laplacian shape")
    }

    fn add_coeff(&mut self, j: usize, a: Section) -> Result<()> {
        if !Arc::ptr_eq(a.chart(), &self.chart) {
            return Err(Error::ChartMismatch("coefficient on another chart".into()));
        }
        if a.lower() != self.q_out || a.upper() != j + self.q_in || a.out_bundle().dim != self.f.dim || a.in_bundle().dim != self.e.dim {
            return Err(Error::ShapeMismatch(format!(
                "a^[{j}] must have {} lower and {} upper slots, fibers {} <- {}",
                self.q_out,
                j + self.q_in,
                self.f.dim,
                self.e.dim
            )));
        }
        let a = a.with_bundles(&self.f, &self.e)?;
        match self.coeffs.remove(&j) {
            Some(b) => {
                self.coeffs.insert(j, b.add(&a)?.non_compact());
            }
            None => {
                self.coeffs.insert(j, a);
            }
        }
        Ok(())
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }
    pub fn source(&self) -> &Arc<SampledBundle> {
        &self.e
    }
    pub fn target(&self) -> &Arc<SampledBundle> {
        &self.f
    }
    pub fn slots(&self) -> (usize, usize) {
        (self.q_in, self.q_out)
    }
    pub fn class(&self) -> CoefficientClass {
        self.class
    }
    pub fn order(&self) -> usize {
        self.coeffs.keys().next_back().copied().unwrap_or(0)
    }
    pub fn coefficients(&self) -> &BTreeMap<usize, Section> {
        &self.coeffs
    }

    /// `sum_j a^[j] nabla^j u`.
    pub fn apply(&self, u: &Section) -> Result<Section> {
        if u.lower() != self.q_in || u.upper() != 0 || u.out_bundle().dim != self.e.dim {
            return Err(Error::ShapeMismatch("section does not match the operator source".into()));
        }
        let mut out = Section::zeros(&self.chart, self.q_out, 0, &self.f, u.in_bundle()).with_compact(u.is_compact());
        let mut v = u.clone();
        let mut level = 0;
        for (&j, a) in &self.coeffs {
            while level < j {
                v = v.nabla()?;
                level += 1;
            }
            out = out.add(&Section::compose(a, &v)?)?.with_compact(u.is_compact());
        }
        Ok(out)
    }

    /// `P + Q`.
    pub fn add(&self, o: &NablaOpSpec) -> Result<NablaOpSpec> {
        if self.q_in != o.q_in || self.q_out != o.q_out {
            return Err(Error::ShapeMismatch("operators with different slot counts".into()));
        }
        let mut s = self.clone();
        s.class = self.class.meet(o.class);
        for (&j, a) in &o.coeffs {
            s.add_coeff(j, a.clone())?;
        }
        Ok(s)
    }

    pub fn scale(&self, c: C64) -> NablaOpSpec {
        let mut s = self.clone();
        for a in s.coeffs.values_mut() {
            *a = a.scale(c);
        }
        s
    }
}

/// `i_X (x) 1_E` as a field with one upper slot.
fn contraction_coeff(chart: &Arc<Chart>, e: &Arc<SampledBundle>, x: &[f64]) -> Section {
    slot_contraction(chart, e, x, 0)
}

/// `i_X` on the leftmost slot of fields with `q + 1` lower slots, as a
/// coefficient with `q` lower and `q + 1` upper slots.
pub fn slot_contraction(chart: &Arc<Chart>, e: &Arc<SampledBundle>, x: &[f64], q: usize) -> Section {
    let n = chart.dim();
    let d = e.dim;
    let mut a = Section::zeros(chart, q, q + 1, e, e).non_compact();
    let inner = n.pow(q as u32) * d;
    let cols = n * inner;
    a.data_mut().par_chunks_mut(inner * cols).enumerate().for_each(|(p, o)| {
        for row in 0..inner {
            for k in 0..n {
                o[row * cols + k * inner + row] = C64::new(x[p * n + k], 0.0);
            }
        }
    });
    a
}

/// `Q . P`. Each `b^[k] nabla^k (c nabla^N)` is expanded with
/// `nabla (c nabla^N) = (nabla c) nabla^N + (1 (x) c) nabla^{N+1}`.
pub fn compose(q: &NablaOpSpec, p: &NablaOpSpec) -> Result<NablaOpSpec> {
    if !Arc::ptr_eq(&q.chart, &p.chart) {
        return Err(Error::ChartMismatch("operators on different charts".into()));
    }
    if q.q_in != p.q_out || q.e.dim != p.f.dim {
        return Err(Error::ShapeMismatch("target of P is not the source of Q".into()));
    }
    let mut out = NablaOpSpec {
        chart: p.chart.clone(),
        e: p.e.clone(),
        f: q.f.clone(),
        q_in: p.q_in,
        q_out: q.q_out,
        coeffs: BTreeMap::new(),
        class: q.class.meet(p.class),
    };
    let max_k = q.order();
    let mut terms: BTreeMap<usize, Section> = p.coeffs.clone();
    for k in 0..=max_k {
        if k > 0 {
            let mut next: BTreeMap<usize, Section> = BTreeMap::new();
            for (&nn, c) in &terms {
                merge(&mut next, nn, c.nabla()?.non_compact())?;
                merge(&mut next, nn + 1, c.identity_tensor().non_compact())?;
            }
            terms = next;
        }
        if let Some(b) = q.coeffs.get(&k) {
            for (&nn, c) in &terms {
                let c = c.clone().with_bundles(&q.e, &p.e)?;
                out.add_coeff(nn, Section::compose(b, &c)?.non_compact())?;
            }
        }
    }
    Ok(out)
}

fn merge(map: &mut BTreeMap<usize, Section>, k: usize, s: Section) -> Result<()> {
    match map.remove(&k) {
        Some(a) => {
            map.insert(k, a.add(&s)?.non_compact());
        }
        None => {
            map.insert(k, s);
        }
    }
    Ok(())
}

/// One term `a nabla_{X_{i_1}} .. nabla_{X_{i_r}}`; `fields` index the
/// field table of the owning spec.
#[derive(Clone, Debug)]
pub struct MixedTerm {
    pub coeff: Section,
    pub fields: Vec<usize>,
}

/// A mixed differential operator from sections of `E` to sections of `F`.
#[derive(Clone, Debug)]
pub struct MixedOpSpec {
    chart: Arc<Chart>,
    e: Arc<SampledBundle>,
    f: Arc<SampledBundle>,
    /// Sampled vector fields, `n` reals per point.
    table: Vec<Arc<Vec<f64>>>,
    /// Set when the table is the generator system `Z_1..Z_N`.
    generators: bool,
    terms: Vec<MixedTerm>,
    class: CoefficientClass,
}

impl MixedOpSpec {
    pub fn new(
        chart: &Arc<Chart>,
        e: &Arc<SampledBundle>,
        f: &Arc<SampledBundle>,
        fields: &[VectorField],
        class: CoefficientClass,
    ) -> Self {
        let table = fields.iter().map(|x| Arc::new(chart.sample_field(x))).collect();
        MixedOpSpec { chart: chart.clone(), e: e.clone(), f: f.clone(), table, generators: false, terms: Vec::new(), class }
    }

    /// An empty spec whose field table is `Z_1..Z_N`.
    pub fn over_generators(gens: &GeneratorSystem, e: &Arc<SampledBundle>, f: &Arc<SampledBundle>, class: CoefficientClass) -> Self {
        let table = (0..gens.count()).map(|j| Arc::new(gens.z_samples(j))).collect();
        MixedOpSpec { chart: gens.chart().clone(), e: e.clone(), f: f.clone(), table, generators: true, terms: Vec::new(), class }
    }

    pub fn push(&mut self, coeff: Section, fields: Vec<usize>) -> Result<()> {
        if coeff.lower() != 0 || coeff.upper() != 0 || coeff.out_bundle().dim != self.f.dim || coeff.in_bundle().dim != self.e.dim {
            return Err(Error::ShapeMismatch("mixed coefficients are Hom(E, F) fields without slots".into()));
        }
        if let Some(bad) = fields.iter().find(|&&i| i >= self.table.len()) {
            return Err(Error::ShapeMismatch(format!("field index {bad} outside the table")));
        }
        let coeff = coeff.with_bundles(&self.f, &self.e)?;
        if let Some(t) = self.terms.iter_mut().find(|t| t.fields == fields) {
            t.coeff = t.coeff.add(&coeff)?.non_compact();
        } else {
            self.terms.push(MixedTerm { coeff, fields });
        }
        Ok(())
    }

    pub fn terms(&self) -> &[MixedTerm] {
        &self.terms
    }
    pub fn class(&self) -> CoefficientClass {
        self.class
    }
    pub fn uses_generators(&self) -> bool {
        self.generators
    }
    pub fn order(&self) -> usize {
        self.terms.iter().map(|t| t.fields.len()).max().unwrap_or(0)
    }
    pub fn field(&self, i: usize) -> &[f64] {
        &self.table[i]
    }

    /// `sum a (nabla_{X_1} .. nabla_{X_r} u)`, innermost field last.
    pub fn apply(&self, u: &Section) -> Result<Section> {
        if u.lower() != 0 || u.upper() != 0 || u.out_bundle().dim != self.e.dim {
            return Err(Error::ShapeMismatch("mixed operators act on sections of E".into()));
        }
        let mut out = Section::zeros(&self.chart, 0, 0, &self.f, u.in_bundle()).with_compact(u.is_compact());
        let mut cache: BTreeMap<Vec<usize>, Section> = BTreeMap::new();
        for t in &self.terms {
            let v = chain(&self.table, u, &t.fields, &mut cache)?;
            out = out.add(&Section::compose(&t.coeff, &v)?)?.with_compact(u.is_compact());
        }
        Ok(out)
    }
}

// Shares the suffixes of derivative chains between terms.
fn chain(table: &[Arc<Vec<f64>>], u: &Section, idx: &[usize], cache: &mut BTreeMap<Vec<usize>, Section>) -> Result<Section> {
    if idx.is_empty() {
        return Ok(u.clone());
    }
    if let Some(v) = cache.get(idx) {
        return Ok(v.clone());
    }
    let inner = chain(table, u, &idx[1..], cache)?;
    let v = inner.directional(&table[idx[0]])?;
    cache.insert(idx.to_vec(), v.clone());
    Ok(v)
}

/// A random mixed operator over the generator fields with `terms` terms of
/// order at most `max_order`, in arbitrary index order.
pub fn random_mixed_spec(
    gens: &GeneratorSystem,
    e: &Arc<SampledBundle>,
    max_order: usize,
    terms: usize,
    seed: u64,
    trial: u64,
) -> Result<MixedOpSpec> {
    let mut rng = trial_rng(seed, trial);
    let mut spec = MixedOpSpec::over_generators(gens, e, e, CoefficientClass::Smooth);
    for t in 0..terms {
        // The first term carries the full order.
        let r = if t == 0 { max_order } else { rng.gen_range(0..=max_order) };
        let fields: Vec<usize> = (0..r).map(|_| rng.gen_range(0..gens.count())).collect();
        let coeff = random_coefficient(gens.chart(), 0, 0, e, e, seed, trial.wrapping_mul(31).wrapping_add(t as u64 + 1))?;
        spec.push(coeff, fields)?;
    }
    Ok(spec)
}

/// Rewrites a mixed operator in `nabla` form by composing
/// `nabla_X = i_X . nabla`.
pub fn mixed_to_nabla(spec: &MixedOpSpec) -> Result<NablaOpSpec> {
    let chart = &spec.chart;
    let mut acc = NablaOpSpec::new(chart, &spec.e, &spec.f, 0, 0, [], spec.class)?;
    for t in &spec.terms {
        let mut p = NablaOpSpec::multiplication(&t.coeff, spec.class)?;
        for &i in &t.fields {
            let d = NablaOpSpec::directional(chart, &spec.e, &spec.table[i], spec.class);
            p = compose(&p, &d)?;
        }
        acc = acc.add(&p)?;
    }
    Ok(acc)
}

/// Scalar-field-times-identity coefficient on `E`.
fn scalar_end(chart: &Arc<Chart>, e: &Arc<SampledBundle>, f: impl Fn(usize) -> f64) -> Section {
    let v: Vec<C64> = (0..chart.npts()).map(|p| C64::new(f(p), 0.0)).collect();
    Section::scalar_identity(chart, e, &v)
}

/// A word `c D(k_1) .. D(k_r)` with `D(k) = nabla_{Z_k}` and `c` a field
/// without slots.
type Word = (Section, Vec<usize>);

/// `nabla_{Z_k} c` for a coefficient field.
fn der_coeff(c: &Section, gens: &GeneratorSystem, k: usize) -> Result<Section> {
    Ok(c.nabla()?.contract_first(&gens.z_samples(k))?.non_compact())
}

/// `D(prefix) M(e)` rewritten as `sum M(e') D(beta)`.
fn commute_left(prefix: &[usize], e: &Section, gens: &GeneratorSystem) -> Result<Vec<Word>> {
    if prefix.is_empty() {
        return Ok(vec![(e.clone(), Vec::new())]);
    }
    let rest = commute_left(&prefix[1..], e, gens)?;
    let k = prefix[0];
    let mut out = Vec::with_capacity(2 * rest.len());
    for (c, beta) in rest {
        out.push((der_coeff(&c, gens, k)?, beta.clone()));
        let mut b2 = vec![k];
        b2.extend(beta);
        out.push((c, b2));
    }
    Ok(out)
}

fn push_word(words: &mut Vec<Word>, w: Word) -> Result<()> {
    if w.0.max_abs() == 0.0 {
        return Ok(());
    }
    if let Some(t) = words.iter_mut().find(|t| t.1 == w.1) {
        t.0 = t.0.add(&w.0)?.non_compact();
    } else {
        words.push(w);
    }
    Ok(())
}

/// `(nabla^j u)(Z_{k_1}, .., Z_{k_j})` as words with `End(E)` coefficients:
/// `D(k_1, rest) = nabla_{Z_{k_1}} D(rest) - sum_s sum_m G^m_{k_1 k_s} D(rest, k_s -> m)`.
fn component_words(
    ks: &[usize],
    gens: &GeneratorSystem,
    sf: &StructureFunctions,
    e: &Arc<SampledBundle>,
    memo: &mut BTreeMap<Vec<usize>, Vec<Word>>,
) -> Result<Vec<Word>> {
    if let Some(w) = memo.get(ks) {
        return Ok(w.clone());
    }
    let chart = gens.chart().clone();
    let out = if ks.is_empty() {
        vec![(Section::identity(&chart, e), Vec::new())]
    } else {
        let k1 = ks[0];
        let rest = &ks[1..];
        let mut words = Vec::new();
        for (c, alpha) in component_words(rest, gens, sf, e, memo)? {
            push_word(&mut words, (der_coeff(&c, gens, k1)?, alpha.clone()))?;
            let mut a2 = vec![k1];
            a2.extend(alpha);
            push_word(&mut words, (c, a2))?;
        }
        for s in 0..rest.len() {
            for m in 0..gens.count() {
                let ks_s = rest[s];
                let gcoef = scalar_end(&chart, e, |p| -sf.g_at(p, k1, ks_s, m));
                if gcoef.max_abs() == 0.0 {
                    continue;
                }
                let mut swapped = rest.to_vec();
                swapped[s] = m;
                for (c, alpha) in component_words(&swapped, gens, sf, e, memo)? {
                    push_word(&mut words, (Section::compose(&gcoef, &c)?.non_compact(), alpha))?;
                }
            }
        }
        words
    };
    memo.insert(ks.to_vec(), out.clone());
    Ok(out)
}

/// `a^[j](xi_{k_1} (x) .. (x) xi_{k_j} (x) .)` for a coefficient without
/// lower slots: a `Hom(E, F)` field.
fn contract_upper(a: &Section, gens: &GeneratorSystem, ks: &[usize]) -> Result<Section> {
    let chart = a.chart().clone();
    let n = chart.dim();
    let (de, df) = (a.in_bundle().dim, a.out_bundle().dim);
    let j = ks.len();
    let cols = n.pow(j as u32) * de;
    let mut out = Section::zeros(&chart, 0, 0, a.out_bundle(), a.in_bundle()).non_compact();
    let ca = a.comps();
    out.data_mut().par_chunks_mut(df * de).enumerate().for_each(|(p, o)| {
        let src = &a.data()[p * ca..(p + 1) * ca];
        for flat in 0..n.pow(j as u32) {
            let mut w = 1.0;
            let mut t = flat;
            for s in (0..j).rev() {
                w *= gens.xi_at(p, ks[s])[t % n];
                t /= n;
            }
            if w == 0.0 {
                continue;
            }
            for f in 0..df {
                for e in 0..de {
                    o[f * de + e] += src[f * cols + flat * de + e] * w;
                }
            }
        }
    });
    Ok(out)
}

/// Rewrites `sum a^[j] nabla^j` on sections of `E` as a mixed operator in
/// the generator fields, using `nabla^j u = sum_k xi_k (x) (nabla^j u)(Z_k)`.
pub fn nabla_to_mixed(spec: &NablaOpSpec, gens: &GeneratorSystem) -> Result<MixedOpSpec> {
    if spec.q_in != 0 || spec.q_out != 0 {
        return Err(Error::ShapeMismatch("nabla_to_mixed needs an operator between sections of E and F".into()));
    }
    if !Arc::ptr_eq(&spec.chart, gens.chart()) {
        return Err(Error::ChartMismatch("generators live on another chart".into()));
    }
    let sf = structure_functions(gens)?;
    let mut out = MixedOpSpec::over_generators(gens, &spec.e, &spec.f, spec.class);
    let mut memo = BTreeMap::new();
    for (&j, a) in &spec.coeffs {
        for ks in tuples(gens.count(), j) {
            let b = contract_upper(a, gens, &ks)?;
            if b.max_abs() == 0.0 {
                continue;
            }
            for (c, alpha) in component_words(&ks, gens, &sf, &spec.e, &mut memo)? {
                out.push(Section::compose(&b, &c)?.non_compact(), alpha)?;
            }
        }
    }
    Ok(out)
}

/// Sorts every term's generator indices into non-decreasing order by
/// adjacent swaps, using
/// `nabla_a nabla_b = nabla_b nabla_a + R(Z_a, Z_b) + sum_m L_ab^m nabla_{Z_m}`
/// and moving new coefficients to the left with
/// `nabla_{Z_k} (e v) = (nabla_{Z_k} e) v + e nabla_{Z_k} v`.
pub fn reorder_generators(spec: &MixedOpSpec, gens: &GeneratorSystem) -> Result<MixedOpSpec> {
    if !spec.generators || spec.table.len() != gens.count() || !Arc::ptr_eq(&spec.chart, gens.chart()) {
        return Err(Error::ShapeMismatch("spec does not use this generator system".into()));
    }
    let chart = spec.chart.clone();
    let sf = structure_functions(gens)?;
    let curv: CurvatureField = curvature(&chart, &spec.e);
    let mut pending: Vec<Word> = spec.terms.iter().map(|t| (t.coeff.clone(), t.fields.clone())).collect();
    let mut done: Vec<Word> = Vec::new();
    while let Some((c, idx)) = pending.pop() {
        let Some(s) = idx.windows(2).position(|w| w[0] > w[1]) else {
            push_word(&mut done, (c, idx))?;
            continue;
        };
        let (a, b) = (idx[s], idx[s + 1]);
        let prefix = &idx[..s];
        let suffix = &idx[s + 2..];
        let mut swapped = idx.clone();
        swapped.swap(s, s + 1);
        push_word(&mut pending, (c.clone(), swapped))?;
        let mut inserts: Vec<(Section, Vec<usize>)> = Vec::new();
        let r = curvature_on(&chart, &spec.e, &curv, &gens.z_samples(a), &gens.z_samples(b));
        inserts.push((r, Vec::new()));
        for m in 0..gens.count() {
            let l = scalar_end(&chart, &spec.e, |p| sf.l_at(p, a, b, m));
            inserts.push((l, vec![m]));
        }
        for (e, mid) in inserts {
            if e.max_abs() == 0.0 {
                continue;
            }
            for (e2, beta) in commute_left(prefix, &e, gens)? {
                let mut fields = beta;
                fields.extend(&mid);
                fields.extend(suffix);
                push_word(&mut pending, (Section::compose(&c, &e2)?.non_compact(), fields))?;
            }
        }
    }
    let mut out = spec.clone();
    out.terms.clear();
    done.sort_by(|x, y| x.1.len().cmp(&y.1.len()).then(x.1.cmp(&y.1)));
    for (c, f) in done {
        out.push(c, f)?;
    }
    Ok(out)
}

/// Empirical continuity ratio of `P: W^{k+mu,p} -> W^{k,p}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MappingReport {
    pub worst_ratio: f64,
    pub bound: f64,
    pub trials: usize,
    pub passed: bool,
}

/// Checks `||P u||_{W^{k,p}} <= C ||u||_{W^{k+mu,p}}` on random bumps with
/// `C = C_{k,p} sum_j ||a^[j]||_{W^{k,inf}}`. Coefficient sups are taken
/// over points at least `k` stencil radii inside the box, where the test
/// sections live.
pub fn mapping_bound_check(spec: &NablaOpSpec, k: usize, p: Exponent, trials: usize, seed: u64) -> Result<MappingReport> {
    let chart = spec.chart.clone();
    let depth = k * chart.grid().fd_order().radius();
    let mut coef_sum = 0.0;
    for a in spec.coeffs.values() {
        let mut v = a.clone();
        let mut best = 0.0f64;
        for j in 0..=k {
            if j > 0 {
                v = v.nabla()?;
            }
            let pw = pointwise_norm(&v)?;
            for (q, m) in pw.iter().enumerate() {
                if chart.grid().depth(q) >= depth {
                    best = best.max(*m);
                }
            }
        }
        coef_sum += best;
    }
    let bound = multiplication_constant(k, Exponent::Infinite, p, p)? * coef_sum;
    let mu = spec.order();
    let ratios: Vec<Result<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let u = random_section(&chart, &spec.e, seed, t)?;
            let pu = spec.apply(&u)?;
            Ok(sobolev_norm(&pu, k, p)? / sobolev_norm(&u, k + mu, p)?)
        })
        .collect();
    let mut worst = 0.0f64;
    for r in ratios {
        worst = worst.max(r?);
    }
    Ok(MappingReport { worst_ratio: worst, bound, trials, passed: worst <= bound * (1.0 + 1e-12) })
}

/// `f0^{-1} rho^mu P f0`, the operator whose unweighted mapping properties
/// give the weighted ones of `P`.
pub fn weighted_conjugate(spec: &NablaOpSpec, rho: &[f64], f0: &[f64], mu: i32) -> Result<NablaOpSpec> {
    let chart = spec.chart.clone();
    let right = NablaOpSpec::multiplication(
        &Section::scalar_identity(&chart, &spec.e, &f0.iter().map(|v| C64::new(*v, 0.0)).collect::<Vec<_>>()),
        spec.class,
    )?;
    let left = NablaOpSpec::multiplication(
        &Section::scalar_identity(
            &chart,
            &spec.f,
            &rho.iter().zip(f0).map(|(r, f)| C64::new(r.powi(mu) / f, 0.0)).collect::<Vec<_>>(),
        ),
        spec.class,
    )?;
    compose(&left, &compose(spec, &right)?)
}
