//! Numerical connection calculus on grid charts.
//!
//! The crate computes covariant derivatives of bundle-valued tensor fields,
//! Sobolev norms built from them (plain, weighted and covering-based),
//! generator systems coming from embeddings, and differential and
//! bidifferential operators written in terms of the connection. Every
//! identity it implements can be checked numerically by comparing two
//! independent routes; the `examples/` directory shows one per capability:
//!
//! ```text
//! cargo run --example magnetic        # iterated derivatives of a magnetic bundle
//! cargo run --example curvature       # Leibniz rule and curvature commutators
//! cargo run --example adjoint         # integration by parts for nabla_X
//! cargo run --example norms           # Sobolev, covering and weighted norms
//! cargo run --example constants       # norm-equivalence and product constants
//! cargo run --example generators      # generator systems on the sphere
//! cargo run --example operators       # composition and mixed-form rewriting
//! cargo run --example dirichlet       # Dirichlet forms and divergence form
//! ```
//!
//! The `nabla-calc` binary runs JSON scenarios built from the same checks.

pub mod bidiff;
pub mod bundles;
pub mod calculus;
pub mod checks;
pub mod error;
pub mod expr;
pub mod generators;
pub mod geometry;
pub mod grid;
pub mod norms;
pub mod operators;
pub mod samples;
pub mod scenario;
pub mod section;

pub use bundles::{BundleSpec, SampledBundle};
pub use error::{Error, Result};
pub use geometry::{MetricField, VectorField, WeightPair};
pub use grid::{ChartGrid, FdOrder};
pub use num_complex::Complex64 as C64;
pub use section::{Chart, Section};
