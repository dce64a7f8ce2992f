//! Relative oscillation theory for Sturm–Liouville operators.
//!
//! The crate decides whether a perturbation `τ₁` of a background expression
//! `τ₀` is relatively oscillatory at the right endpoint, by evaluating the
//! critical-constant criteria on iterated-logarithm scales and by counting
//! weighted sign flips of Wronskians through continuous Prüfer-type angles.

pub mod averaging;
pub mod coeffs;
pub mod criteria;
pub mod effective;
pub mod expr;
pub mod floquet;
pub mod harness;
pub mod interp;
pub mod logscale;
pub mod ode;
pub mod pruefer;
pub mod sl;
pub mod stats;

use thiserror::Error;

pub use coeffs::{Coefficient, CoefficientSet, DeltaCoefficients};
pub use criteria::{CriterionVerdict, Verdict};
pub use expr::Expr;
pub use ode::{OdeError, OdeOptions};
pub use sl::{Solution, SolutionTrajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError),
    #[error("coefficient is not admissible at x = {x}: {what}")]
    NonIntegrableCoefficient { x: f64, what: String },
    #[error("invalid coefficient set: {0}")]
    InvalidCoefficients(String),
    #[error("solution is not positive on the range (sign change near x = {0})")]
    NonPositiveSolution(f64),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("coefficient sets live on different intervals")]
    IntervalMismatch,
    #[error("coefficient sets use different weights r (max deviation {0:e})")]
    WeightMismatch(f64),
    #[error("degenerate state (u, pu') ~ (0, 0) at x = {0}")]
    DegenerateState(f64),
    #[error("query range [{lo}, {hi}] not covered")]
    RangeMismatch { lo: f64, hi: f64 },
    #[error("basis is not normalized: W(u0, v0) = {0}")]
    BasisNotNormalized(f64),
    #[error("tangent pole inside the window near x = {0}")]
    PoleInWindow(f64),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("beta changes sign or vanishes near x = {0}")]
    SignChangeInBeta1(f64),
    #[error("x = {x} is not above the threshold e_{n} = {threshold}")]
    DomainBelowThreshold { n: u32, x: f64, threshold: f64 },
    #[error("positive solution is not minimal: {0}")]
    MinimalityViolated(String),
    #[error("edge data not admissible: {0}")]
    NotAdmissible(String),
    #[error("tail integral does not converge: {0}")]
    NotIntegrable(String),
    #[error("s(z, period) = {0:e} too small; shift the base point")]
    DegenerateBasePoint(f64),
    #[error("no sign change of |D| - 2 in the requested range")]
    NoBracket,
    #[error("eigenvalue count {count} exceeds the cap {cap}")]
    WindowTooWide { count: i64, cap: i64 },
    #[error("expression: {0}")]
    Parse(#[from] expr::ParseError),
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
