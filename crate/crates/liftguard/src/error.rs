//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("ambient dimension mismatch: {0} vs {1}")]
    AmbientMismatch(usize, usize),

    #[error("nominal dynamics unstable: spectral radius {rho:.6} >= 1")]
    UnstablePlant { rho: f64 },

    #[error("sensor schedule is empty or has no samples")]
    EmptySchedule,

    #[error("schedule offsets must be strictly increasing and within [0, T)")]
    BadSchedule,

    #[error("attack mode `{0}` is not defined in the model")]
    ModeMissing(String),

    #[error("not an output-nulling subspace: nulling residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotOutputNulling { residual: f64, tol: f64 },

    #[error("subspace is not invariant: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotInvariant { residual: f64, tol: f64 },

    #[error("thresholds undefined: lifted dynamics unstable (spectral radius {rho:.6})")]
    ThresholdsUndefined { rho: f64 },

    #[error("mode `{0}` is vulnerable; detection thresholds are undefined")]
    ModeVulnerable(String),

    #[error("stealth budget {budget:.3e} too small to admit a nonzero attack scale")]
    BudgetTooSmall { budget: f64 },

    #[error("degenerate witness: severity channel gain {gain:.3e} below tolerance")]
    DegenerateWitness { gain: f64 },

    #[error("case-3 synthesis requires a real eigenvalue; got {re:.6}+{im:.6}i")]
    ComplexCase3 { re: f64, im: f64 },

    #[error("trace too short: need at least {need} frames, have {have}")]
    WindowUnderflow { need: usize, have: usize },

    #[error("attack policy returned a block of size {got}, expected {expected}")]
    BadPolicyBlock { expected: usize, got: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
