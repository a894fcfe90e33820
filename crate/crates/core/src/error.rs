use thiserror::Error;

pub type Result<T> = std::result::Result<T, NlgError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NlgError {
    #[error("unknown kernel spec `{0}`")]
    UnknownKernel(String),

    #[error("nonpositive scale parameter `{name}` = {value}")]
    NonPositiveScale { name: &'static str, value: f64 },

    #[error("moment diverges (order {order})")]
    MomentDiverges { order: u32 },

    #[error("spacing does not divide side: side {side}, h {h}")]
    SpacingDoesNotDivide { side: f64, h: f64 },

    #[error("eps {eps} is not an integer multiple of h {h}")]
    EpsNotMultiple { eps: f64, h: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("node {0} is not covered by any test-function region")]
    UncoveredNode(usize),

    #[error("reflection pad {pad} exceeds side of {side} cells")]
    PadTooLarge { pad: usize, side: usize },

    #[error("fields live on different domains")]
    DomainMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite energy: {0}")]
    NonFinite(String),

    #[error("infeasible constraint: no free nodes")]
    NoFreeNodes,

    #[error("instance too large for enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("sweep infeasible: {0}")]
    SweepInfeasible(String),

    #[error("unsupported normal {0:?}")]
    UnsupportedNormal(Vec<f64>),

    #[error("table too small: {0}")]
    TableTooSmall(String),

    #[error("working cutoff {t_max} must exceed cutoff {t}")]
    CutoffOrder { t: f64, t_max: f64 },

    #[error("test function is not piecewise affine: {0}")]
    NotPiecewiseAffine(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl From<std::io::Error> for NlgError {
    fn from(e: std::io::Error) -> Self {
        NlgError::Io(e.to_string())
    }
}
