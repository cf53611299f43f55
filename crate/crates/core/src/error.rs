use thiserror::Error;

#[derive(Debug, Error)]
pub enum NlmcError {
    #[error("cells must be square: Lx/nx = {hx}, Ly/ny = {hy}")]
    AspectRatio { hx: f64, hy: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid coarse grid: {0}")]
    InvalidCoarseGrid(String),

    #[error("fracture segment is shorter than one fine cell after snapping ({0})")]
    DegenerateFracture(String),

    #[error("fracture endpoint ({x}, {y}) lies outside the domain")]
    FractureOutsideDomain { x: f64, y: f64 },

    #[error(
        "unsupported fracture orientation (di = {di}, dj = {dj}); allowed orientations are \
         horizontal, vertical and 45-degree diagonal"
    )]
    FractureOrientation { di: i64, dj: i64 },

    #[error("nonpositive coefficient {value} on {what} {id}")]
    NonPositiveCoefficient { what: &'static str, id: usize, value: f64 },

    #[error("coarse block {0} is entirely covered by fracture nodes")]
    DegenerateBlock(usize),

    #[error("incompatible source: imbalance {imbalance:e} exceeds tolerance {tolerance:e}")]
    IncompatibleSource { imbalance: f64, tolerance: f64 },

    #[error("redundant constraint {index} ({detail})")]
    RedundantConstraint { index: usize, detail: String },

    #[error("singular saddle-point system: {0}")]
    SingularSystem(String),

    #[error("solver residual {residual:e} exceeds tolerance {tolerance:e} ({what})")]
    Residual { what: String, residual: f64, tolerance: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<NlmcError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NlmcError>;

pub trait ResultExt<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn context(self, context: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| NlmcError::Context {
            context: context(),
            source: Box::new(e),
        })
    }
}
