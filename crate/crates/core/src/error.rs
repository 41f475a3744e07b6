use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state space exceeds the enumeration cap of {cap} states")]
    CapExceeded { cap: usize },
    #[error("state space has a single state; R is undefined")]
    DegenerateSpace,
    #[error("subset is disconnected under the restricted neighborhood")]
    DisconnectedRestriction,
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("invalid clip bounds: ell = {ell} must be below L = {big_l}")]
    InvalidClip { ell: f64, big_l: f64 },
    #[error("state {0} has an empty neighborhood")]
    IsolatedState(String),
    #[error("submodel is numerically singular")]
    SingularModel,
    #[error("gram matrix is not positive semidefinite")]
    InvalidGram,
    #[error("invalid initialization: {0}")]
    InvalidInit(String),
    #[error("chain is not reversible: {0}")]
    NotReversible(String),
    #[error("restricted variance form is degenerate")]
    DegenerateRestriction,
    #[error("chain is not irreducible with respect to the target state")]
    NotIrreducible,
    #[error("hypothesis violated at state {0}")]
    HypothesisViolated(String),
    #[error("no drift certificate: lambda = {lambda} at state {state}")]
    NoCertificate { lambda: f64, state: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
