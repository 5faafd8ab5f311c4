use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("degenerate Fermi level: eps_N = {homo}, eps_N+1 = {lumo}")]
    DegenerateFermiLevel { homo: f64, lumo: f64 },
    #[error("kernel is not positive semidefinite: min eigenvalue {min} vs max {max}")]
    NotPsd { min: f64, max: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("evaluation point {re}{im:+}i lies on a pole")]
    AtPole { re: f64, im: f64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("basis dimension {dim} exceeds the configured cap {cap}")]
    MemoryBudget { dim: usize, cap: usize },
    #[error("ground state is degenerate: gap {gap} <= {tol}")]
    DegenerateGroundState { gap: f64, tol: f64 },
    #[error("time step too large: dt * E_max = {0} > 0.1")]
    StepTooLarge(f64),
    #[error("time grid does not resolve frequencies: dt * omega_max = {0} > 0.2")]
    UnresolvedTimeGrid(f64),
    #[error("ill-conditioned implicit step (condition number {0:e})")]
    IllConditionedStep(f64),
    #[error("no contraction window above the floor (needed {needed:e}, floor {floor:e})")]
    NoContraction { needed: f64, floor: f64 },
    #[error("fixed-point iteration did not converge in {sweeps} sweeps (last change {change:e})")]
    NotConverged { sweeps: usize, change: f64 },
    #[error("Fourier tail not damped: Im z * T = {0} < 23 or Im z below the growth rate")]
    TailNotDamped(f64),
    #[error("interval ({lo}, {hi}) contains a pole of the reference response")]
    IntervalContainsPole { lo: f64, hi: f64 },
    #[error("bisection did not reach tolerance after {0} iterations")]
    MaxBisectionIterations(usize),
    #[error("contour passes too close to a pole at {0}")]
    ContourHitsPole(f64),
    #[error("contour quadrature not converged: relative change {0:e} on doubling")]
    QuadratureNotConverged(f64),
    #[error("singular resolvent (condition number {0:e})")]
    SingularResolvent(f64),
    #[error("degenerate Fermi level or empty model: {0}")]
    EmptyModel(String),
    #[error("retained states miss {missing:e} of the total residue weight")]
    TruncationWeight { missing: f64 },
    #[error("inconsistent series: {0}")]
    InconsistentSeries(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
