use thiserror::Error;

use crate::hilbert::SpaceSpec;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Hilbert-space dimension {dim} exceeds the budget of {budget}")]
    DimensionBudget { dim: usize, budget: usize },

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitIndex { index: usize, n_qubits: usize },

    #[error("individual qubit operators are unavailable in Holstein-Primakoff mode")]
    HolsteinPrimakoffMode,

    #[error("operands live in different spaces: {0:?} vs {1:?}")]
    SpaceMismatch(SpaceSpec, SpaceSpec),

    #[error(
        "coherent amplitude |xi|^2 = {norm_sq:.3} is too large for Fock cutoff {cutoff}; \
         use a cutoff of at least {suggested}"
    )]
    TruncationGuard {
        norm_sq: f64,
        cutoff: usize,
        suggested: usize,
    },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("{quantity} is only defined in the {required} phase (g = {g})")]
    PhaseDomain {
        quantity: &'static str,
        required: &'static str,
        g: f64,
    },

    #[error("g = {g} lies inside the critical window around g = 1")]
    Critical { g: f64 },

    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("eigensolver did not converge after {iterations} matrix-vector products (max residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("requested {requested} eigenpairs from a space of dimension {dim}")]
    TooManyEigenpairs { requested: usize, dim: usize },

    #[error("operator does not commute with the parity (residual {0:e})")]
    ParityBroken(f64),

    #[error("ground state is degenerate (gap {0:e})")]
    DegenerateGround(f64),

    #[error("finite-difference stencil crosses the critical point g = 1")]
    StencilCrossesCritical,

    #[error("norm drift {0:e} during time evolution")]
    NormDrift(f64),

    #[error("occupation {0:e} at the Fock truncation edge; raise the cutoff")]
    EdgeOccupancy(f64),

    #[error("excitation parameter Delta = {0:e} must be positive")]
    NonPositiveDelta(f64),

    #[error("operator identity residual {0:e} exceeds tolerance")]
    IdentityResidual(f64),

    #[error("finite-difference estimate unstable: {0}")]
    FdUnstable(String),

    #[error("homodyne estimation needs at least two shots, got {0}")]
    TooFewShots(usize),

    #[error("calibration gate failed: closed form {closed:e} vs numeric {numeric:e}")]
    CalibrationGate { closed: f64, numeric: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
