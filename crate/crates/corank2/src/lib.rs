//! Symbolic-numeric analysis of corank-2 distributions on R^6.
//!
//! The crate builds rank-4 distributions from pairs of independent 1-forms,
//! classifies the induced curvature pairing pointwise (elliptic, hyperbolic
//! or degenerate), constructs the canonical almost complex structure on
//! elliptic regions, and evaluates the obstruction tensor that decides
//! whether the structure is integrable to a complex-contact one.
//!
//! Exact work (derivatives, wedge products, Lie brackets) is symbolic over
//! an expression tree; pointwise work (root finding, null spaces, the
//! correction solve, finite-difference sweeps) is floating point. Every
//! symbolic result has a numeric cross-check path, and sampled evaluation
//! stands in for structural equality throughout.

pub mod almost_complex;
pub mod catalog;
pub mod checklist;
pub mod distribution;
pub mod ellipticity;
pub mod exterior;
pub mod fd;
pub mod obstruction;
pub mod oracle;
pub mod parse;
pub mod sample;
pub mod scalar;

use scalar::Point;

/// Crate-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Eval(#[from] scalar::EvalError),
    #[error(transparent)]
    Parse(#[from] parse::ParseError),
    #[error(transparent)]
    Sample(#[from] sample::SampleExhausted),
    #[error("defining 1-forms are not independent near {point} (largest 2x2 minor {minor:.3e})")]
    FormsNotIndependent { point: Point, minor: f64 },
    #[error("framing field {index} is not tangent to the distribution at {point} (residual {residual:.3e})")]
    FramingNotTangent {
        index: usize,
        point: Point,
        residual: f64,
    },
    #[error("framing degenerates at {point} (smallest 4x4 minor {minor:.3e})")]
    FramingSingular { point: Point, minor: f64 },
    #[error("non-elliptic: det={det}")]
    NonElliptic { point: Point, det: f64 },
    #[error("{what} failed a consistency check (residual {residual:.3e})")]
    SelfCheck { what: String, residual: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
