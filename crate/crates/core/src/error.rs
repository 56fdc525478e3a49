use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("resolvent did not converge after {iterations} iterations (x = {x}, lambda = {lambda})")]
    NonConvergence { x: f64, lambda: f64, iterations: usize },

    #[error("adaptive quadrature exceeded depth budget {depth} on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64, depth: usize },

    #[error("conductivity {value} at cell {cell} is not positive")]
    NonPositiveConductivity { cell: usize, value: f64 },

    #[error("conjugate gradient breakdown at iteration {iteration}: curvature {curvature}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    CgNoConvergence { iterations: usize, residual: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonNoConvergence { iterations: usize, residual: f64 },

    #[error("Newton Jacobian is not positive definite")]
    IndefiniteJacobian,

    #[error("Picard iteration did not converge after {iterations} iterations (change {change:e})")]
    PicardNoConvergence { iterations: usize, change: f64 },

    #[error("positivity of mu lost at cell {cell}: {detail}")]
    LostPositivity { cell: usize, detail: String },

    #[error("no stored level for delayed time {time} (need level {level}, have {stored})")]
    HistoryGap { time: f64, level: usize, stored: usize },

    #[error("{0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("audit {audit} failed at step {step}: {detail}")]
    AuditFailure { audit: &'static str, step: usize, detail: String },

    #[error("step {step} (t = {time}): {source}")]
    AtStep { step: usize, time: f64, source: Box<Error> },
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonConvergence { .. } => "NonConvergence",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::NonPositiveConductivity { .. } => "NonPositiveConductivity",
            Error::CgBreakdown { .. } => "CgBreakdown",
            Error::CgNoConvergence { .. } => "CgNoConvergence",
            Error::NewtonNoConvergence { .. } => "NewtonNoConvergence",
            Error::IndefiniteJacobian => "IndefiniteJacobian",
            Error::PicardNoConvergence { .. } => "PicardNoConvergence",
            Error::LostPositivity { .. } => "LostPositivity",
            Error::HistoryGap { .. } => "HistoryGap",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::InvalidScenario(_) => "InvalidScenario",
            Error::AuditFailure { .. } => "AuditFailure",
            Error::AtStep { source, .. } => source.code(),
        }
    }

    /// The innermost error, with step annotations stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn at_step(self, step: usize, time: f64) -> Error {
        Error::AtStep { step, time, source: Box::new(self) }
    }
}
