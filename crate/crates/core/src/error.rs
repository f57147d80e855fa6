use thiserror::Error;

/// Errors raised by the library. The CLI maps each variant onto an exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BmcError {
    #[error("invalid node id {0}: node ids start at 1")]
    InvalidNode(u64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient depth: need {needed}, population has {available}")]
    InsufficientDepth { needed: u32, available: u32 },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("depth {requested} exceeds the configured maximum {max}")]
    DepthLimit { requested: u32, max: u32 },
    #[error("functional kind mismatch: {0}")]
    FunctionalKind(String),
    #[error("unsupported functional `{0}`")]
    UnsupportedFunctional(String),
    #[error("kernel is not a valid probability tensor: {0}")]
    InvalidKernel(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("chain is not irreducible and aperiodic")]
    NotErgodic,
    #[error("chain is not geometrically ergodic at tolerance (alpha = {0})")]
    NotGeometricallyErgodic(f64),
    #[error("functional is not centered: (mu, f) = {0}")]
    NotCentered(f64),
    #[error("enumeration too large: {0} configurations")]
    StateSpaceExplosion(f64),
    #[error("degenerate design: B_r = {0}")]
    DegenerateDesign(f64),
    #[error("zero residual variance: sigma2_hat = {0}")]
    ZeroVariance(f64),
    #[error("degenerate stationary variance: mu2 - mu1^2 = {0}")]
    DegenerateVariance(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("incomplete tree: missing node ids {missing:?}")]
    IncompleteTree { missing: Vec<u64> },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BmcError {
    fn from(e: std::io::Error) -> Self {
        BmcError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BmcError>;
