//! Bell-test statistics for conditional homodyne detection of two-mode
//! squeezed light.
//!
//! The crate computes the CHSH and CH statistics of the click-conditioned
//! homodyne scheme along three independent routes:
//!
//! - [`analytic`] evaluates the exact closed forms and provides threshold and
//!   maximum finders over the squeezing parameter;
//! - [`fock_oracle`] rebuilds everything by brute force in a truncated Fock
//!   basis (beam splitters, click POVMs, quadrature densities, Wigner
//!   functions) without touching the closed forms;
//! - [`montecarlo`] simulates the measurement records an experiment would
//!   collect and estimates the same statistics with quantified error.

pub mod analytic;
pub mod fock_oracle;
pub mod model;
pub mod montecarlo;
mod search;

pub use model::{BellResult, ClosedFormCoefficients, ExperimentParams, PhaseQuad};
pub use search::linspace;

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    /// The parameter point admits no conditional state (zero click probability).
    #[error("degenerate conditioning: {0}")]
    DegenerateConditioning(String),
    /// An input lies outside its meaningful range.
    #[error("parameter out of range: {0}")]
    Range(String),
    /// A quantity violated an identity that holds analytically; this is a bug
    /// in the implementation, not a user error.
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    /// A bracketed search found no crossing of the violation bound.
    #[error("no crossing on the search bracket: {0}")]
    NoCrossing(String),
    /// The truncated Fock basis is too small for the requested quantity.
    #[error("Fock truncation too coarse: {0}")]
    TruncationTooCoarse(String),
    /// The requested Fock dimension exceeds the supported cap.
    #[error("Fock dimension overflow: {0}")]
    DimensionOverflow(String),
    /// A quadrature or phase-space grid failed its normalization check.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
