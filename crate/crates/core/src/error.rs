use alloc::string::String;
use core::fmt;

/// Errors raised by the estimation chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidArgument(String),
    DimensionMismatch { context: &'static str, expected: (usize, usize), found: (usize, usize) },
    SingularMatrix(&'static str),
    IllConditionedPrecoder { condition: f64 },
    StructureViolation { residual: f64 },
    InfeasibleStart { excess: f64 },
    NumericalFailure(&'static str),
    DegenerateStream { stream: usize },
    SingularPilot,
    SingularEstimate,
    AmbiguityUnresolvable { position: usize },
    InsufficientSamples { retained: usize, required: usize },
    DetectionFailure { stream: usize },
    OutOfRegime { neumann_norm: f64 },
    ConditionGate { kappa: f64, kappa_max: f64 },
    CapacityExceeded { requested: usize, available: usize },
    EstimationImpossible,
    UndefinedMetric(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DimensionMismatch { context, expected, found } => write!(
                f,
                "dimension mismatch in {context}: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::SingularMatrix(ctx) => write!(f, "singular matrix in {ctx}"),
            Error::IllConditionedPrecoder { condition } => {
                write!(f, "ill-conditioned precoder (condition number {condition:.3e})")
            }
            Error::StructureViolation { residual } => {
                write!(f, "matrix violates the complex block structure (residual {residual:.3e})")
            }
            Error::InfeasibleStart { excess } => {
                write!(f, "infeasible starting point (constraint excess {excess:.3e})")
            }
            Error::NumericalFailure(ctx) => write!(f, "numerical failure: {ctx}"),
            Error::DegenerateStream { stream } => write!(f, "stream {stream} is identically zero"),
            Error::SingularPilot => write!(f, "pilot block is singular"),
            Error::SingularEstimate => write!(f, "channel estimate is singular"),
            Error::AmbiguityUnresolvable { position } => {
                write!(f, "two streams claim pilot position {position}")
            }
            Error::InsufficientSamples { retained, required } => {
                write!(f, "only {retained} samples retained, {required} required")
            }
            Error::DetectionFailure { stream } => write!(f, "LMMSE bias term vanished on stream {stream}"),
            Error::OutOfRegime { neumann_norm } => {
                write!(f, "perturbation outside the Neumann regime (||H^-1 D||_2 = {neumann_norm:.3})")
            }
            Error::ConditionGate { kappa, kappa_max } => {
                write!(f, "condition number {kappa:.3e} exceeds gate {kappa_max:.3e}")
            }
            Error::CapacityExceeded { requested, available } => {
                write!(f, "{requested} pilot resource elements requested, {available} available")
            }
            Error::EstimationImpossible => write!(f, "no pilot observations for some stream"),
            Error::UndefinedMetric(ctx) => write!(f, "metric undefined: {ctx}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
