use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("rate matrix must be square, got {rows} rows with a row of length {cols}")]
    Shape { rows: usize, cols: usize },

    #[error("negative transition rate {value} at ({row}, {col})")]
    InvalidRate { row: usize, col: usize, value: f64 },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("rate matrix is reducible; mode {to} cannot be reached from mode {from}")]
    Reducible { from: usize, to: usize },

    #[error("mode {to} is unreachable from mode {from}")]
    Unreachable { from: usize, to: usize },

    #[error(
        "grid spacing {h} too coarse for the switching rates: first-order switch probabilities \
         go negative (need h < {bound})"
    )]
    TimestepValidity { h: f64, bound: f64 },

    #[error("only two-dimensional problems are supported by the update operators (got d = {0})")]
    UnsupportedDimension(usize),

    #[error("sweeping did not converge within {} sweeps (last max change {})", .0.sweeps, .0.final_max_change)]
    NotConverged(Box<SolveReport>),

    #[error("no feedback policy available at ({x}, {y}) in mode {mode}")]
    NoPolicy { x: f64, y: f64, mode: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit status used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged(_) => 3,
            Error::NoPolicy { .. } | Error::Io { .. } => 4,
            _ => 2,
        }
    }
}
