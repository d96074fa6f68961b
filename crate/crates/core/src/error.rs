use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is indefinite: minimum eigenvalue {min_eigenvalue:e} below tolerance")]
    IndefiniteInput { min_eigenvalue: f64 },

    #[error("Sylvester pencil is singular: smallest eigenvalue sum {min_sum:e}")]
    SingularPencil { min_sum: f64 },

    #[error("bad initial condition: {0}")]
    BadInitialCondition(String),

    #[error("path is degenerate at grid index {index} (t = {t}): not strictly positive definite")]
    DegeneratePath { index: usize, t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Riccati solution blew up at t = {t} (operator norm {norm:e})")]
    BlowUp { t: f64, norm: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
