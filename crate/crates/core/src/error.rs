use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = FemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("quadrature degree {degree} not supported (maximum {max})")]
    UnsupportedDegree { degree: usize, max: usize },

    #[error("polynomial degree k = {0} not supported (expected 1 or 2)")]
    UnsupportedElementDegree(usize),

    #[error("invalid mesh: {0}")]
    Structural(String),

    #[error("{path}:{line}: {message}")]
    Msh { path: PathBuf, line: usize, message: String },

    #[error("degenerate cell {cell} (|det J| = {det:e})")]
    DegenerateCell { cell: usize, det: f64 },

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(&'static str),

    #[error("singular matrix: no acceptable pivot in column {column} (max candidate {magnitude:e})")]
    SingularMatrix { column: usize, magnitude: f64 },

    #[error("solve did not converge: relative residual {residual:e}")]
    Residual { residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("level {level}: {source}")]
    Level {
        level: usize,
        #[source]
        source: Box<FemError>,
    },
}
