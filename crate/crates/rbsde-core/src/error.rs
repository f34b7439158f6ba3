use thiserror::Error;

/// Errors produced by lattice construction, solvers and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("layer shape mismatch: {0}")]
    Shape(String),

    /// The bracket around the implicit cell never straddled a sign change.
    /// Usually means the declared monotonicity constant is wrong or the step
    /// size is too large for it.
    #[error("no root bracketed after {attempts} expansions around c={target}")]
    NoRoot { attempts: u32, target: f64 },

    #[error("driver returned a non-finite value at t={t}, b={b}, y={y}, z={z}")]
    DriverEval { t: f64, b: f64, y: f64, z: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("path mode error: {0}")]
    Mode(String),
}

pub type Result<T> = std::result::Result<T, Error>;
