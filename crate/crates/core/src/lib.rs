//! Sleep-enabled CSMA over conflict graphs.
//!
//! Links alternate between sleeping and awake phases driven by exponential
//! timers, and contend for the channel with exponential back-off while awake.
//! The chain over (awake pattern, transmitting set) has a product-form
//! stationary distribution, which makes exact throughput and awake-fraction
//! analysis tractable and turns parameter selection into a convex problem.
//!
//! The crate is organized bottom-up:
//! - [`topology`]: conflict graphs and enumeration of the joint state space
//! - [`analytic`]: exact stationary distribution and its marginals
//! - [`regions`]: capacity region membership and strict-feasibility margins
//! - [`optimizer`]: offline computation of optimal aggressiveness parameters
//! - [`simcore`]: continuous-time event-driven simulation with energy accounting
//! - [`adaptation`]: distributed online gradient updates over measurement frames
//! - [`slotted`]: mini-slot contention with real collisions and an 802.11 DCF baseline

pub mod adaptation;
pub mod analytic;
pub mod optimizer;
pub mod regions;
pub mod simcore;
pub mod slotted;
pub mod topology;

/// Crate-wide error type. Variants carry enough context to name the
/// offending quantity in user-facing messages.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("state space too large: {states} states exceeds cap {cap}")]
    SizeLimitExceeded { states: u64, cap: u64 },
    #[error("infeasible state: {0}")]
    InfeasibleState(String),
    #[error("value out of range: {0}")]
    RangeError(String),
    #[error("linear program failed: {0}")]
    LpNumericalFailure(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("no packets delivered on link {link}")]
    NoPackets { link: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("measurement frame is empty")]
    EmptyFrame,
    #[error("iteration did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
