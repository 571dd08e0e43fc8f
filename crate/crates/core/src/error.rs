use thiserror::Error;

/// Errors raised by the simulator.
///
/// Validation variants carry the offending magnitude so callers can report
/// how far outside tolerance a state was.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("matrix is not Hermitian (max |rho - rho^dag| = {0:e})")]
    HermiticityViolation(f64),
    #[error("trace deviates from one by {0:e}")]
    TraceViolation(f64),
    #[error("negative eigenvalue {0:e}")]
    NegativityViolation(f64),
    #[error("population {0:e} in the guard band exceeds the truncation tolerance")]
    TruncationOverflow(f64),
    #[error("population p_e = {p_e} or p_g = {p_g} vanishes; temperature is unbounded")]
    DegeneratePopulation { p_e: f64, p_g: f64 },
    #[error("generator kernel is not one-dimensional (relative pivot {0:e})")]
    DegenerateKernel(f64),
    #[error("integration lost trace conservation (drift {0:e})")]
    NonConvergence(f64),
    #[error("population P_{index} = {value:e} is not positive")]
    NonPositivePopulation { index: usize, value: f64 },
    #[error("division by zero evaluating {0}")]
    DivisionByZero(&'static str),
    #[error("distribution does not normalize within the truncation (R = {0} at the edge)")]
    DivergentDistribution(f64),
    #[error("moments diverge: gamma2 - gamma1 = {0:e} is not positive")]
    UnstableDynamics(f64),
    #[error("resonance unreachable: omega_res = {omega_res:e} exceeds 2 E_J = {max:e}")]
    Unreachable { omega_res: f64, max: f64 },
    #[error("records do not share a sampling grid")]
    GridMismatch,
}

pub type Result<T> = std::result::Result<T, Error>;

/// Non-fatal conditions. These never change a computed value.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Atom with `p_e > p_g`: negative temperature.
    PopulationInversion { p_e: f64, p_g: f64 },
    /// `r * tau` is not small; instantaneous injection is questionable.
    CoarseGraining { r_tau: f64 },
    /// Integration step is large compared with the generator norm.
    StepTooLarge { dt: f64, limit: f64 },
    /// `g tau sqrt(dim)` is not small; the second-order expansion degrades.
    ShortTime { g_tau_sqrt_dim: f64 },
    /// Qubit reset window is not much longer than the coupling window.
    RelaxationRatio { ratio: f64 },
    /// Qubit splitting is negative at this flux.
    NegativeSplitting { omega0: f64 },
}
