use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular Gram matrix: det = {det:e} is below {floor:e}")]
    SingularGram { det: f64, floor: f64 },

    #[error("rank mismatch: expected rank {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("unknown gallery entry `{0}`")]
    UnknownGallery(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("point {point:?} lies outside the domain: {reason}")]
    OutOfDomain { point: Vec<f64>, reason: String },

    #[error("point {point:?} lies on the singular set {set}")]
    SingularPoint { point: Vec<f64>, set: String },

    #[error("lattice index {index:?} is not interior; central stencils need one neighbour on each side")]
    OutOfStencil { index: Vec<usize> },

    #[error("grid file, row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("incomplete lattice: {0}")]
    IncompleteLattice(String),

    #[error("irregular lattice: {0}")]
    IrregularLattice(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("invalid exponent p = {0}; p must lie in [2, inf]")]
    InvalidExponent(f64),

    #[error("the sampling box has no interior lattice points")]
    EmptyInterior,

    #[error("need at least {needed} points for a {dim}-dimensional fit, got {got}")]
    TooFewPoints { needed: usize, got: usize, dim: usize },

    #[error("gradient rank is not constant on the subdomain: found ranks {found:?}")]
    ConstantRankViolation { found: Vec<usize> },

    #[error("direction is tangent to the image everywhere (max normal part {max_normal:e})")]
    DegenerateDirection { max_normal: f64 },

    #[error("degenerate separated coefficients at ({x}, {y}): [f' | g'] has smallest singular value {sigma:e}")]
    DegenerateCoefficients { x: f64, y: f64, sigma: f64 },

    #[error("integration path degenerates at node ({x}, {y})")]
    PathDegeneracy { x: f64, y: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
