use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KatokError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("point with s1^2+s2^2 = {u} lies outside the injective chart (limit {limit})")]
    ChartDomain { u: f64, limit: f64 },
    #[error("orbit left the chart (s1^2+s2^2 = {u}) at t = {t}")]
    ChartExit { u: f64, t: f64 },
    #[error("integrator could not meet tolerance at t = {t} (step {h})")]
    StepFailure { t: f64, h: f64 },
    #[error("root finding failed to bracket: {0}")]
    RootBracket(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("slope left the chart of slopes (|eta| = {eta})")]
    Blowup { eta: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("no partition element avoids D_r0 for Q = {q} steps (best found: {achieved})")]
    NoValidElement { q: usize, achieved: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no return within cap {cap}")]
    ReturnCapExceeded { cap: usize },
    #[error("unstable direction did not settle (residual {residual:e})")]
    Convergence { residual: f64 },
    #[error("Newton iteration diverged from seed ({x}, {y})")]
    NewtonDivergence { x: f64, y: f64 },
    #[error("could not grow local curve: {0}")]
    CurveGrowth(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, KatokError>;
