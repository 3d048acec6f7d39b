use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Neither a convective nor a diffusive time-step bound exists.
    #[error("no stability bound on dt (epsilon = 0 and g' = 0 on the range); supply an explicit dt")]
    UnboundedDt,

    #[error("non-finite state at t = {time}")]
    BlowUp { time: f64 },

    #[error("ensemble member {index} (xi = {xi}) failed: {source}")]
    Member {
        index: usize,
        xi: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("CDF boundary contract violated: {0}")]
    Contract(String),

    #[error("lattice mismatch: {0}")]
    Lattice(String),

    #[error("time step underflow at t = {time} (dt = {dt:e})")]
    DtUnderflow { time: f64, dt: f64 },

    /// Config validation; one entry per offending key.
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
