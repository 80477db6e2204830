use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("unknown measure family `{0}`")]
    UnknownFamily(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("linear program failed: {0}")]
    LpFailure(String),

    #[error("derivative order {requested} exceeds the available order {available}")]
    OrderExceeded { requested: usize, available: usize },

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("box misaligned with projection layout: K = {k} does not tile the box (half_side = {half_side})")]
    Misaligned { k: i64, half_side: i64 },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("eigensolver failed to converge: {0}")]
    EigenFailure(String),

    #[error("linear solve broke down at z = {re} + {im}i: {reason}")]
    SolveBreakdown { re: f64, im: f64, reason: String },

    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("measure pair outside the admissible radius: d_w = {distance} >= {radius}")]
    OutsideRadius { distance: f64, radius: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
