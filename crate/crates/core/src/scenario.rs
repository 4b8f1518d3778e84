//! JSON scenarios: a chart, a metric, a bundle and a list of named checks,
//! run deterministically under a seed into a report.
//!
//! Report columns, in order: `scenario, id, kind, digest, measured, bound,
//! tolerance, passed, points, fd_order, detail`. `digest` is the first 16
//! hex digits of a SHA-256 over the scenario inputs the check depends on.
//! Run times are returned alongside the report but never written, so that
//! identical inputs give identical bytes.

use crate::bidiff::{AdjointRoute, BidiffSpec};
use crate::bundles::{BundleSpec, SampledBundle};
use crate::checks::{self, CheckOutcome, ROUND_OFF};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::generators::{build_generators, EmbeddingSpec, GeneratorSystem};
use crate::geometry::{MetricField, WeightPair};
use crate::grid::{ChartGrid, FdOrder};
use crate::norms::Exponent;
use crate::operators::{mapping_bound_check, mixed_to_nabla, nabla_to_mixed, reorder_generators, CoefficientClass, MixedOpSpec, NablaOpSpec};
use crate::samples::{random_section_of_width, trial_rng};
use crate::section::{Chart, Section};
use crate::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub chart: ChartConfig,
    #[serde(default)]
    pub metric: MetricConfig,
    #[serde(default)]
    pub bundle: BundleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operators: Vec<OperatorConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bidiffs: Vec<BidiffConfig>,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// The coordinate box and its grid. Give either `points` per axis or a
/// spacing `h`; the default is 129 points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<usize>,
    #[serde(default = "default_fd_order")]
    pub fd_order: u32,
    /// Skip support checks and compare away from the faces instead.
    #[serde(default)]
    pub interior_only: bool,
}

fn default_fd_order() -> u32 {
    4
}

/// A named metric (`flat`, `stereographic-sphere`, `induced`), a conformal
/// factor `c` for `g = c I`, or all `n * n` entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricConfig {
    Named(String),
    Conformal { conformal: String },
    Entries { entries: Vec<String> },
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig::Named("flat".into())
    }
}

/// A named bundle (`magnetic-example`, `trivial`), a flat bundle of some
/// rank, or potentials `A_k` as `rank * rank` expressions each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BundleConfig {
    Named(String),
    Potentials { rank: usize, potentials: Vec<Vec<String>> },
    Flat { rank: usize },
}

impl Default for BundleConfig {
    fn default() -> Self {
        BundleConfig::Named("trivial".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub rho: String,
    #[serde(default = "one")]
    pub f0: String,
}

fn one() -> String {
    "1".into()
}

/// A term `coefficient * nabla^order` or `coefficient * nabla_{X_f1} .. nabla_{X_fk}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<usize>>,
    pub coefficient: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldTable {
    Generators,
    Coordinates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorForm {
    Nabla { terms: Vec<TermConfig> },
    Mixed { fields: FieldTable, terms: Vec<TermConfig> },
    RandomMixed { max_order: usize, terms: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub name: String,
    #[serde(flatten)]
    pub form: OperatorForm,
}

/// `a_ij` entries with `n^(i+j) * rank^2` expressions, or random coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidiffEntry {
    pub i: usize,
    pub j: usize,
    pub coefficient: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidiffConfig {
    pub name: String,
    pub order: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entries: Vec<BidiffEntry>,
    #[serde(default)]
    pub random: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RouteConfig {
    Trace,
    Generators,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub id: String,
    #[serde(flatten)]
    pub kind: CheckKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn d_trials() -> u64 {
    5
}
fn d_max_order() -> usize {
    3
}
fn d_width() -> f64 {
    0.075
}
fn d_half_line() -> Vec<usize> {
    vec![129, 257, 513, 1025]
}
fn d_min_ratio() -> f64 {
    12.0
}
fn d_k() -> usize {
    1
}
fn d_route() -> RouteConfig {
    RouteConfig::Trace
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckKind {
    /// Second derivatives of the magnetic bundle against closed forms.
    MagneticClosedForm {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    Leibniz {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    Curvature {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    AdjointPairing {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    CoveringBounds {
        #[serde(default = "d_trials")]
        coverings: u64,
    },
    GeneratorIdentities {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    GridDivergence {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    /// Round trip of random mixed operators, or of a named mixed operator.
    OperatorRoundTrip {
        #[serde(default = "d_trials")]
        specs: u64,
        #[serde(default = "d_max_order")]
        max_order: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        operator: Option<String>,
    },
    MappingBound {
        operator: String,
        #[serde(default = "d_k")]
        k: usize,
        #[serde(default = "d_trials")]
        trials: u64,
    },
    PerturbedNorms {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    Multiplication {
        #[serde(default = "d_trials")]
        trials: u64,
    },
    /// Weighted norms on the half-line `(0.01, 2.5)` with `rho = r`; uses its
    /// own one-dimensional geometry.
    HalfLineWeighted {
        #[serde(default = "d_half_line")]
        points: Vec<usize>,
        #[serde(default)]
        l: usize,
    },
    DivergenceDuality {
        bidiff: String,
        #[serde(default = "d_route")]
        route: RouteConfig,
        #[serde(default = "d_trials")]
        pairs: u64,
        #[serde(default = "d_width")]
        width: f64,
    },
    /// Duality pairing pictured in the rescaled metric of the scenario weight.
    WeightedDuality {
        bidiff: String,
        #[serde(default = "d_trials")]
        pairs: u64,
        #[serde(default = "d_width")]
        width: f64,
    },
    /// Ratio of an inner check's residual on the grid and on the grid with
    /// half the spacing.
    Convergence {
        of: Box<CheckKind>,
        #[serde(default = "d_min_ratio")]
        min_ratio: f64,
    },
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::MagneticClosedForm { .. } => "magnetic-closed-form",
            CheckKind::Leibniz { .. } => "leibniz",
            CheckKind::Curvature { .. } => "curvature",
            CheckKind::AdjointPairing { .. } => "adjoint-pairing",
            CheckKind::CoveringBounds { .. } => "covering-bounds",
            CheckKind::GeneratorIdentities { .. } => "generator-identities",
            CheckKind::GridDivergence { .. } => "grid-divergence",
            CheckKind::OperatorRoundTrip { .. } => "operator-round-trip",
            CheckKind::MappingBound { .. } => "mapping-bound",
            CheckKind::PerturbedNorms { .. } => "perturbed-norms",
            CheckKind::Multiplication { .. } => "multiplication",
            CheckKind::HalfLineWeighted { .. } => "half-line-weighted",
            CheckKind::DivergenceDuality { .. } => "divergence-duality",
            CheckKind::WeightedDuality { .. } => "weighted-duality",
            CheckKind::Convergence { .. } => "convergence",
        }
    }

    /// Tolerance used when a check does not set one.
    pub fn default_tolerance(&self) -> f64 {
        match self {
            CheckKind::AdjointPairing { .. } => 1e-6,
            CheckKind::CoveringBounds { .. } => 1e-10,
            CheckKind::OperatorRoundTrip { .. } => 1e-4,
            CheckKind::HalfLineWeighted { .. } => 1e-2,
            CheckKind::MappingBound { .. } | CheckKind::PerturbedNorms { .. } | CheckKind::Multiplication { .. } => 1.0,
            CheckKind::Convergence { of, .. } => of.default_tolerance(),
            _ => 1e-5,
        }
    }
}

/// One row of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    pub kind: String,
    pub digest: String,
    #[serde(with = "lenient_f64")]
    pub measured: f64,
    #[serde(with = "lenient_f64")]
    pub bound: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub points: Vec<usize>,
    pub fd_order: u32,
    pub passed: bool,
    pub rows: Vec<Row>,
}

/// A report and the wall-clock time of each row in milliseconds.
#[derive(Clone, Debug)]
pub struct Run {
    pub report: Report,
    pub runtime_ms: Vec<f64>,
}

/// Non-finite values written as strings so JSON stays round-trippable.
mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format `{s}`"))),
        }
    }
}

/// Command-line overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub fd_order: Option<u32>,
    pub seed: Option<u64>,
}

const BUILTINS: &[(&str, &str, &str)] = &[
    (
        "magnetic-example",
        "magnetic bundle on the flat square: closed forms, Leibniz, curvature, adjoint, norms",
        include_str!("../scenarios/magnetic-example.json"),
    ),
    (
        "sphere-ffc",
        "stereographic sphere with ambient generators: identities, rewriting, duality",
        include_str!("../scenarios/sphere-ffc.json"),
    ),
];

/// Names and one-line descriptions of the built-in scenarios.
pub fn builtins() -> Vec<(&'static str, &'static str)> {
    BUILTINS.iter().map(|(n, d, _)| (*n, *d)).collect()
}

pub fn builtin(name: &str) -> Result<Scenario> {
    let (_, _, src) = BUILTINS
        .iter()
        .find(|(n, _, _)| *n == name)
        .ok_or_else(|| Error::Resolution(format!("no built-in scenario `{name}`")))?;
    Scenario::from_json(src)
}

impl Scenario {
    pub fn from_json(src: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// A scenario file, or a built-in when no such file exists.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            if let Some(name) = path.to_str() {
                if BUILTINS.iter().any(|(n, _, _)| *n == name) {
                    return builtin(name);
                }
            }
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(h) = o.h {
            self.chart.h = Some(h);
            self.chart.points = None;
        }
        if let Some(k) = o.fd_order {
            self.chart.fd_order = k;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.chart;
        if c.lower.is_empty() || c.lower.len() != c.upper.len() {
            return Err(Error::Config("chart box needs matching nonempty `lower` and `upper`".into()));
        }
        if c.points.is_some() && c.h.is_some() {
            return Err(Error::Config("give either `points` or `h`, not both".into()));
        }
        if let Some(h) = c.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("grid spacing {h} is not positive")));
            }
        }
        if FdOrder::from_u32(c.fd_order).is_none() {
            return Err(Error::Config(format!("fd_order must be 2 or 4, got {}", c.fd_order)));
        }
        let mut ids = std::collections::BTreeSet::new();
        for check in &self.checks {
            if !ids.insert(check.id.as_str()) {
                return Err(Error::Config(format!("duplicate check id `{}`", check.id)));
            }
            if let Some(t) = check.tolerance {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::Config(format!("check `{}`: tolerance must be positive", check.id)));
                }
            }
        }
        Ok(())
    }

    /// The grid the scenario asks for.
    pub fn grid(&self) -> Result<ChartGrid> {
        let c = &self.chart;
        let shape: Vec<usize> = match (c.points, c.h) {
            (_, Some(h)) => c.lower.iter().zip(&c.upper).map(|(a, b)| ((b - a) / h).round() as usize + 1).collect(),
            (Some(p), None) => vec![p; c.lower.len()],
            (None, None) => vec![129; c.lower.len()],
        };
        let order = FdOrder::from_u32(c.fd_order).ok_or_else(|| Error::Config("fd_order must be 2 or 4".into()))?;
        let mut g = ChartGrid::new(&c.lower, &c.upper, &shape)?.with_fd_order(order);
        if let Some(m) = c.margin {
            g = g.with_margin(m)?;
        }
        if c.interior_only {
            g = g.with_support_tol(None);
        }
        Ok(g)
    }
}

fn exprs(src: &[String], n: usize) -> Result<Vec<Expr>> {
    src.iter().map(|s| Expr::parse(s, n)).collect()
}

fn real_fn(src: &str, n: usize) -> Result<crate::geometry::ScalarFn> {
    let e = Expr::parse(src, n)?;
    Ok(Arc::new(move |x: &[f64]| e.eval_real(x)))
}

/// The argument of `name(arg)`, if `s` has that shape.
fn call_arg<'a>(s: &'a str, name: &str) -> Option<&'a str> {
    s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')
}

fn embedding(name: &str, n: usize, seed: u64) -> Result<EmbeddingSpec> {
    if name == "identity" {
        return Ok(EmbeddingSpec::identity(n));
    }
    if name == "sphere-ambient" {
        if n != 2 {
            return Err(Error::Config("sphere-ambient needs a two-dimensional chart".into()));
        }
        return Ok(EmbeddingSpec::sphere_ambient());
    }
    if let Some(f) = call_arg(name, "graph") {
        return Ok(EmbeddingSpec::graph(n, real_fn(f, n)?));
    }
    if let Some(big) = call_arg(name, "random") {
        let big: usize = big.trim().parse().map_err(|_| Error::Config(format!("bad ambient dimension in `{name}`")))?;
        if big < n {
            return Err(Error::Config(format!("`{name}` has fewer rows than the chart dimension")));
        }
        return Ok(EmbeddingSpec::random(&mut trial_rng(seed, 0), n, big));
    }
    Err(Error::Resolution(format!("embedding `{name}`")))
}

fn metric(cfg: &MetricConfig, n: usize, emb: Option<&EmbeddingSpec>) -> Result<MetricField> {
    match cfg {
        MetricConfig::Named(s) => match s.as_str() {
            "flat" | "euclidean" => Ok(MetricField::euclidean(n)),
            "stereographic-sphere" if n == 2 => Ok(MetricField::stereographic_sphere()),
            "stereographic-sphere" => Err(Error::Config("stereographic-sphere needs a two-dimensional chart".into())),
            "induced" => emb
                .map(|e| e.induced_metric())
                .ok_or_else(|| Error::Config("metric `induced` needs an embedding".into())),
            other => match call_arg(other, "graph") {
                Some(f) => Ok(crate::generators::graph_metric(n, real_fn(f, n)?)),
                None => Err(Error::Resolution(format!("metric `{other}`"))),
            },
        },
        MetricConfig::Conformal { conformal } => {
            let c = real_fn(conformal, n)?;
            Ok(MetricField::conformal_to_flat(n, "conformal", move |x| c(x)))
        }
        MetricConfig::Entries { entries } => MetricField::from_exprs(n, entries),
    }
}

fn bundle(cfg: &BundleConfig, n: usize) -> Result<BundleSpec> {
    match cfg {
        BundleConfig::Named(s) => match s.as_str() {
            "trivial" => Ok(BundleSpec::trivial(n)),
            "magnetic-example" if n == 2 => Ok(BundleSpec::magnetic_example()),
            "magnetic-example" => Err(Error::Config("magnetic-example lives over a two-dimensional chart".into())),
            other => Err(Error::Resolution(format!("bundle `{other}`"))),
        },
        BundleConfig::Flat { rank } => Ok(BundleSpec::flat(n, *rank)),
        BundleConfig::Potentials { rank, potentials } => BundleSpec::from_exprs(n, *rank, potentials),
    }
}

fn coefficient(chart: &Arc<Chart>, lower: usize, upper: usize, e: &Arc<SampledBundle>, src: &[String]) -> Result<Section> {
    let n = chart.dim();
    let want = n.pow((lower + upper) as u32) * e.dim * e.dim;
    if src.len() != want {
        return Err(Error::Config(format!("coefficient needs {want} entries, got {}", src.len())));
    }
    let ex = exprs(src, n)?;
    Section::coefficient(chart, lower, upper, e, e, |x| ex.iter().map(|t| t.eval(x)).collect::<Vec<C64>>())
}

enum Operator {
    Nabla(NablaOpSpec),
    Mixed(MixedOpSpec),
}

/// Everything a check can refer to, sampled on one grid.
struct Setup {
    chart: Arc<Chart>,
    bundle: Arc<SampledBundle>,
    gens: Option<GeneratorSystem>,
    weight: Option<WeightPair>,
    operators: BTreeMap<String, Operator>,
    bidiffs: BTreeMap<String, BidiffSpec>,
}

impl Setup {
    fn new(s: &Scenario, grid: ChartGrid) -> Result<Self> {
        let n = grid.dim();
        let emb = s.embedding.as_deref().map(|name| embedding(name, n, s.seed)).transpose()?;
        let chart = Chart::new(grid, metric(&s.metric, n, emb.as_ref())?)?;
        let bundle = chart.bundle(&bundle(&s.bundle, n)?)?;
        let gens = match emb {
            Some(e) => {
                let iso = e.isometry_defect(&chart) <= 1e-8;
                Some(build_generators(&chart, &e.with_isometric(iso))?)
            }
            None => None,
        };
        let weight = match &s.weight {
            Some(w) => Some(WeightPair::new(real_fn(&w.rho, n)?, real_fn(&w.f0, n)?)),
            None => None,
        };
        let mut setup = Setup { chart, bundle, gens, weight, operators: BTreeMap::new(), bidiffs: BTreeMap::new() };
        for op in &s.operators {
            let built = setup.operator(op, s.seed)?;
            setup.operators.insert(op.name.clone(), built);
        }
        for b in &s.bidiffs {
            let built = setup.bidiff(b, s.seed)?;
            setup.bidiffs.insert(b.name.clone(), built);
        }
        Ok(setup)
    }

    fn gens(&self) -> Result<&GeneratorSystem> {
        self.gens.as_ref().ok_or_else(|| Error::Config("this check needs an `embedding`".into()))
    }

    fn operator(&self, cfg: &OperatorConfig, seed: u64) -> Result<Operator> {
        let (chart, e) = (&self.chart, &self.bundle);
        let class = CoefficientClass::Smooth;
        match &cfg.form {
            OperatorForm::Nabla { terms } => {
                let mut coeffs = Vec::new();
                for t in terms {
                    let j = t.order.ok_or_else(|| Error::Config(format!("operator `{}`: nabla terms need `order`", cfg.name)))?;
                    coeffs.push((j, coefficient(chart, 0, j, e, &t.coefficient)?));
                }
                Ok(Operator::Nabla(NablaOpSpec::new(chart, e, e, 0, 0, coeffs, class)?))
            }
            OperatorForm::Mixed { fields, terms } => {
                let mut m = match fields {
                    FieldTable::Generators => MixedOpSpec::over_generators(self.gens()?, e, e, class),
                    FieldTable::Coordinates => {
                        let xs: Vec<_> = (0..chart.dim()).map(|k| crate::geometry::VectorField::coordinate(chart.dim(), k)).collect();
                        MixedOpSpec::new(chart, e, e, &xs, class)
                    }
                };
                for t in terms {
                    let f = t.fields.clone().ok_or_else(|| Error::Config(format!("operator `{}`: mixed terms need `fields`", cfg.name)))?;
                    m.push(coefficient(chart, 0, 0, e, &t.coefficient)?, f)?;
                }
                Ok(Operator::Mixed(m))
            }
            OperatorForm::RandomMixed { max_order, terms } => {
                Ok(Operator::Mixed(crate::operators::random_mixed_spec(self.gens()?, e, *max_order, *terms, seed, 0)?))
            }
        }
    }

    fn bidiff(&self, cfg: &BidiffConfig, seed: u64) -> Result<BidiffSpec> {
        if cfg.random {
            if !cfg.entries.is_empty() {
                return Err(Error::Config(format!("bidiff `{}`: give `entries` or `random`, not both", cfg.name)));
            }
            return checks::random_bidiff(&self.chart, &self.bundle, cfg.order, seed);
        }
        let mut coeffs = Vec::new();
        for en in &cfg.entries {
            coeffs.push(((en.i, en.j), coefficient(&self.chart, en.j, en.i, &self.bundle, &en.coefficient)?));
        }
        BidiffSpec::new(&self.chart, &self.bundle, &self.bundle, cfg.order, coeffs, CoefficientClass::Smooth)
    }

    fn bidiff_named(&self, name: &str) -> Result<&BidiffSpec> {
        self.bidiffs.get(name).ok_or_else(|| Error::Resolution(format!("bidiff `{name}`")))
    }

    fn mixed_named(&self, name: &str) -> Result<&MixedOpSpec> {
        match self.operators.get(name) {
            Some(Operator::Mixed(m)) => Ok(m),
            Some(Operator::Nabla(_)) => Err(Error::Config(format!("operator `{name}` is not in mixed form"))),
            None => Err(Error::Resolution(format!("operator `{name}`"))),
        }
    }
}

fn run_kind(kind: &CheckKind, setup: &Setup, s: &Scenario, seed: u64, tol: f64) -> Result<CheckOutcome> {
    let (chart, e) = (&setup.chart, &setup.bundle);
    match kind {
        CheckKind::MagneticClosedForm { trials } => checks::magnetic_closed_form(chart, *trials, seed, tol),
        CheckKind::Leibniz { trials } => checks::leibniz(chart, e, *trials, seed, tol),
        CheckKind::Curvature { trials } => checks::curvature_commutator(chart, e, *trials, seed, tol),
        CheckKind::AdjointPairing { trials } => checks::adjoint_pairing(chart, e, *trials, seed, tol),
        CheckKind::CoveringBounds { coverings } => checks::covering_bounds(chart, e, *coverings, seed, tol),
        CheckKind::GeneratorIdentities { trials } => checks::generator_identities(setup.gens()?, e, *trials, seed, tol),
        CheckKind::GridDivergence { trials } => checks::grid_divergence(chart, *trials, seed, tol),
        CheckKind::OperatorRoundTrip { specs, max_order, operator: None } => {
            checks::operator_round_trip(setup.gens()?, e, *specs, *max_order, seed, tol)
        }
        CheckKind::OperatorRoundTrip { specs, operator: Some(name), .. } => {
            let gens = setup.gens()?;
            let m = setup.mixed_named(name)?;
            if !m.uses_generators() {
                return Err(Error::Config(format!("operator `{name}` must be written over the generators")));
            }
            let back = reorder_generators(&nabla_to_mixed(&mixed_to_nabla(m)?, gens)?, gens)?;
            let sorted = back.terms().iter().all(|t| t.fields.windows(2).all(|w| w[0] <= w[1]));
            let quarter = chart.grid().shape().iter().map(|s| (s - 1) / 4).min().unwrap_or(0);
            let depth = (4 * m.order() * chart.grid().fd_order().radius()).max(quarter);
            let mut worst = 0.0f64;
            for t in 0..*specs {
                let u = crate::samples::random_section(chart, e, seed, t)?;
                let want = m.apply(&u)?;
                worst = worst.max(back.apply(&u)?.sub(&want)?.max_abs_interior(depth) / want.max_abs_interior(depth));
            }
            let mut out = CheckOutcome::at_most(worst, tol, format!("{specs} sections"));
            if !sorted {
                out.passed = false;
                out.detail.push_str("; unsorted output tuple");
            }
            Ok(out)
        }
        CheckKind::MappingBound { operator, k, trials } => {
            let p = match setup.operators.get(operator) {
                Some(Operator::Nabla(p)) => p.clone(),
                Some(Operator::Mixed(m)) => mixed_to_nabla(m)?,
                None => return Err(Error::Resolution(format!("operator `{operator}`"))),
            };
            let r = mapping_bound_check(&p, *k, Exponent::Finite(2.0), *trials as usize, seed)?;
            let mut out = CheckOutcome::at_most(r.worst_ratio / r.bound, tol, format!("sup ratio {:.3e}, constant {:.3e}", r.worst_ratio, r.bound));
            out.passed &= r.passed;
            Ok(out)
        }
        CheckKind::PerturbedNorms { trials } => checks::perturbed_norms(chart, e, *trials, seed).map(|o| rebound(o, tol)),
        CheckKind::Multiplication { trials } => checks::multiplication(chart, e, *trials, seed).map(|o| rebound(o, tol)),
        CheckKind::HalfLineWeighted { points, l } => checks::half_line_weighted(points, *l, tol).map(|(o, _)| o),
        CheckKind::DivergenceDuality { bidiff, route, pairs, width } => {
            let spec = setup.bidiff_named(bidiff)?;
            let route = match route {
                RouteConfig::Trace => AdjointRoute::Trace,
                RouteConfig::Generators => AdjointRoute::Generators(setup.gens()?),
            };
            checks::divergence_duality(spec, route, *pairs, *width, seed, tol)
        }
        CheckKind::WeightedDuality { bidiff, pairs, width } => {
            let spec = setup.bidiff_named(bidiff)?;
            let weight = setup.weight.as_ref().ok_or_else(|| Error::Config("weighted-duality needs a `weight`".into()))?;
            let p = crate::bidiff::assemble_divergence_form(spec, AdjointRoute::Trace)?;
            let mut worst = 0.0f64;
            for t in 0..*pairs {
                let u = random_section_of_width(chart, spec.source(), *width, seed, 2 * t)?;
                let w = random_section_of_width(chart, spec.target(), *width, seed, 2 * t + 1)?;
                worst = worst.max(crate::bidiff::weighted_duality_check(spec, &p, weight, &u, &w, tol)?.residual);
            }
            Ok(CheckOutcome::at_most(worst, tol, format!("{pairs} pairs")))
        }
        CheckKind::Convergence { of, min_ratio } => {
            if matches!(**of, CheckKind::Convergence { .. } | CheckKind::HalfLineWeighted { .. }) {
                return Err(Error::Config("convergence needs a grid-based inner check".into()));
            }
            let coarse = run_kind(of, setup, s, seed, tol)?.measured;
            let fine_setup = Setup::new(s, setup.chart.grid().refined(2)?)?;
            let fine = run_kind(of, &fine_setup, s, seed, tol)?.measured;
            let detail = format!("{} residual {coarse:.3e} -> {fine:.3e}", of.name());
            if coarse <= ROUND_OFF {
                return Ok(CheckOutcome { measured: f64::INFINITY, bound: *min_ratio, passed: true, detail: detail + " (round-off)" });
            }
            let ratio = coarse / fine;
            Ok(CheckOutcome { measured: ratio, bound: *min_ratio, passed: ratio >= *min_ratio, detail })
        }
    }
}

/// Ratio checks carry their own bound of one; a tolerance loosens it.
fn rebound(mut o: CheckOutcome, tol: f64) -> CheckOutcome {
    o.bound = o.bound.max(tol);
    o.passed = o.measured <= o.bound;
    o
}

fn digest(s: &Scenario, check: &CheckConfig, seed: u64) -> Result<String> {
    let inputs = serde_json::json!({
        "chart": s.chart,
        "metric": s.metric,
        "bundle": s.bundle,
        "weight": s.weight,
        "embedding": s.embedding,
        "operators": s.operators,
        "bidiffs": s.bidiffs,
        "check": check,
        "seed": seed,
    });
    let bytes = serde_json::to_vec(&inputs).map_err(|e| Error::Config(e.to_string()))?;
    let hash = Sha256::digest(&bytes);
    Ok(hash.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Runs every check of the scenario in order.
pub fn run_scenario(s: &Scenario) -> Result<Run> {
    s.validate()?;
    let grid = s.grid()?;
    let points = grid.shape().to_vec();
    let setup = Setup::new(s, grid)?;
    let mut rows = Vec::with_capacity(s.checks.len());
    let mut runtime_ms = Vec::with_capacity(s.checks.len());
    for check in &s.checks {
        let seed = check.seed.unwrap_or(s.seed);
        let tol = check.tolerance.unwrap_or_else(|| check.kind.default_tolerance());
        let start = Instant::now();
        let out = run_kind(&check.kind, &setup, s, seed, tol)
            .map_err(|e| Error::Check { check: check.id.clone(), source: Box::new(e) })?;
        runtime_ms.push(start.elapsed().as_secs_f64() * 1e3);
        rows.push(Row {
            id: check.id.clone(),
            kind: check.kind.name().into(),
            digest: digest(s, check, seed)?,
            measured: out.measured,
            bound: out.bound,
            tolerance: tol,
            passed: out.passed,
            detail: out.detail,
        });
    }
    let report = Report {
        scenario: s.name.clone(),
        seed: s.seed,
        points,
        fd_order: s.chart.fd_order,
        passed: rows.iter().all(|r| r.passed),
        rows,
    };
    Ok(Run { report, runtime_ms })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    id: &'a str,
    kind: &'a str,
    digest: &'a str,
    measured: String,
    bound: String,
    tolerance: String,
    passed: bool,
    points: String,
    fd_order: u32,
    detail: &'a str,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let points = self.points.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("x");
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record([
                "scenario", "id", "kind", "digest", "measured", "bound", "tolerance", "passed", "points", "fd_order", "detail",
            ])
            .map_err(csv_err)?;
        }
        for r in &self.rows {
            w.serialize(CsvRow {
                scenario: &self.scenario,
                id: &r.id,
                kind: &r.kind,
                digest: &r.digest,
                measured: format!("{:e}", r.measured),
                bound: format!("{:e}", r.bound),
                tolerance: format!("{:e}", r.tolerance),
                passed: r.passed,
                points: points.clone(),
                fd_order: self.fd_order,
                detail: &r.detail,
            })
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("{other:?}")),
    }
}

/// Writes `<dir>/<scenario>.<ext>` and returns its path.
pub fn emit_report(report: &Report, format: Format, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.{}", report.scenario, format.extension()));
    std::fs::write(&path, report.render(format)?)?;
    Ok(path)
}
