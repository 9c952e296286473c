//! Numerical laboratory for random Lindbladian ensembles.
//!
//! The crate builds GKSL generators with a linear parametrization
//! L(θ) = L_ref + (δ/√M) Σ_j θ_j G_j, evolves states under e^{tL}, extracts
//! measurement statistics, and verifies the linear-response and concentration
//! behaviour of the induced output ensembles at desk scale. On top of the
//! dynamics it implements two authentication protocols driven by statistical
//! oracles: a distribution-level scheme using Hadamard test functions
//! ([`puf_hadamard`]) and a process-tomography scheme ([`puf_tomography`]).
//!
//! Module layering (each layer depends only on earlier ones):
//! [`operators`] → [`lindblad`] → [`distributions`] → [`oracles`] →
//! [`response`] → [`experiments`] → [`puf_hadamard`] / [`puf_tomography`].

pub mod distributions;
pub mod experiments;
pub mod expm;
pub mod lindblad;
pub mod operators;
pub mod oracles;
pub mod puf_hadamard;
pub mod puf_tomography;
pub mod response;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A dimension or length precondition failed.
    #[error("dimension error in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    /// An argument violated a documented precondition.
    #[error("invalid argument in {context}: {message}")]
    Invalid {
        context: &'static str,
        message: String,
    },
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure in {context}: {message}")]
    Numerical {
        context: &'static str,
        message: String,
    },
    /// An oracle query was issued after its query budget ran out.
    #[error("oracle budget exhausted: {used} of {budget} queries already consumed")]
    BudgetExhausted { used: u64, budget: u64 },
    /// File emission failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
