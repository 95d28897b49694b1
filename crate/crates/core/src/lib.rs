//! Simulation and analysis of linear preferential attachment random trees.
//!
//! The crate covers the full pipeline from graph growth to rare-event
//! estimation:
//!
//! * [`generator`] grows plain and coloured (fitness) attachment trees with
//!   weight `f_t(k, a) = γ(t,a)·k + β(t,a)`, including an exponentially
//!   tilted variant of the dynamics.
//! * [`empirics`] extracts the empirical attachment measure and time-gridded
//!   degree snapshots from a generated history.
//! * [`measures`] provides the truncated probability measures these live in,
//!   together with relative entropy, total variation, tails, marginals and
//!   conditionals.
//! * [`rates`] evaluates the limiting degree law `π_f` and the entropy rate
//!   functionals `I`, `J`, `J̃` and the variational lower form `K̂`.
//! * [`rare_events`] implements the exact likelihood ratio of the tilted
//!   dynamics, importance-sampling and naive estimators, tilt suggestion and
//!   decay-rate scans.
//! * [`oracle`] enumerates every attachment history for tiny `n` in exact
//!   rational arithmetic, giving ground truth for the generator and the
//!   likelihood ratios.
//! * [`optimize`] minimises rate functionals over truncated simplices and
//!   runs the contraction cross-check between the pair-level and degree-level
//!   rates.
//!
//! All logarithms are natural; every reported entropy is in nats.

#![forbid(unsafe_code)]

pub mod empirics;
pub mod generator;
pub mod measures;
pub mod optimize;
pub mod oracle;
pub mod predicate;
pub mod rare_events;
pub mod rates;
pub mod weights;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two objects that must share an index structure do not.
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// An input failed its validity conditions.
    #[error("validation failed: {0}")]
    Validation(String),

    /// An argument is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A conditional was requested on a zero-mass colour pair.
    #[error("undefined conditional: colour pair ({0}, {1}) carries zero mass")]
    UndefinedConditional(usize, usize),

    /// An event log failed replay validation.
    #[error("corrupted event log: {0}")]
    CorruptLog(String),

    /// A constraint set has no feasible interior point.
    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    /// A tilt target puts mass where its baseline has none.
    #[error("tilt support violation at k={k}, pair=({a0},{a1}): target mass {target:e}, baseline zero")]
    SupportViolation { k: usize, a0: usize, a1: usize, target: f64 },

    /// Exact enumeration would exceed the configured outcome budget.
    #[error("enumeration refused: {0}")]
    TooLarge(String),

    /// An iteration budget ran out before any work could be done.
    #[error("budget exhausted: {0}")]
    Budget(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Absolute tolerance for "sums to one" checks on probability vectors.
pub const MASS_TOL: f64 = 1e-12;
