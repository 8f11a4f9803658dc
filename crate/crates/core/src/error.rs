//! Error types shared across the crate.
//!
//! Modules use small typed enums for the failure modes their contracts name;
//! everything converges into [`Error`] for the pipeline and the CLI, which
//! maps the categories onto process exit codes (config 2, numerical 3, io 4).

use thiserror::Error;

/// Why a potential/field evaluation refused to produce a value.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FieldError {
    /// The query point lies inside the dielectric; the caller should treat
    /// the atom as crashed rather than evaluate optical potentials there.
    #[error("position (y={y:.4e} m, z={z:.4e} m) is inside the dielectric")]
    InsideDielectric { y: f64, z: f64 },
    /// The query point left the configured simulation domain.
    #[error("position (y={y:.4e} m, z={z:.4e} m) is outside the simulation domain")]
    OutsideDomain { y: f64, z: f64 },
    /// An imported grid does not cover the query point.
    #[error("position (y={y:.4e} m, z={z:.4e} m) is outside the imported grid")]
    OutsideGrid { y: f64, z: f64 },
    /// Laser frequency coincides with one of the reference lines.
    #[error("laser detuning from the {line} line is zero; dipole potential is singular")]
    SingularDetuning { line: &'static str },
}

/// Failures while parsing a plain-text field grid file.
#[derive(Debug, Error)]
pub enum GridParseError {
    #[error("grid header malformed: {0}")]
    Header(String),
    #[error("grid value count mismatch: header promises {expected}, file holds {found}")]
    Count { expected: usize, found: usize },
    #[error("grid value #{index} is {what}")]
    BadValue { index: usize, what: String },
    #[error("grid io: {0}")]
    Io(#[from] std::io::Error),
}

/// Failures in transfer-matrix assembly and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MatrixError {
    #[error("atom positions must be sorted ascending along x")]
    UnsortedPositions,
    #[error("single-atom transmission coefficient is zero (gamma' = 0 on resonance)")]
    SingularAtom,
    #[error("total matrix m22 is zero; transmission undefined")]
    SingularTotal,
    #[error("trajectories do not cover requested time {t:.4e} s")]
    Coverage { t: f64 },
}

/// Failures in time-tag folding and alignment.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ClockError {
    #[error("sync stream holds {found} markers; folding needs at least 2")]
    TooFewSyncs { found: usize },
    #[error("histogram binning mismatch: {left} vs {right} bins")]
    BinningMismatch { left: usize, right: usize },
    #[error("clocked projection is flat; no atom signal to align on")]
    NoSignal,
    #[error("fringe contrast {found:.3} below usable threshold {threshold:.3}")]
    LowContrast { found: f64, threshold: f64 },
    #[error("sync markers must be strictly increasing")]
    UnsortedSyncs,
}

/// Failures in spectrum fitting.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("fit input invalid: {0}")]
    BadInput(String),
    #[error("linear solve failed inside the optimizer (singular normal matrix)")]
    SingularSolve,
}

/// Umbrella error for pipeline stages and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration rejected before any work ran. Holds one message per
    /// violation, each naming the offending field path.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    /// Numerical failure in a simulation or analysis stage.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Grid(#[from] GridParseError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 io.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 4,
            Error::Grid(GridParseError::Io(_)) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_map_by_category() {
        assert_eq!(Error::Config(vec!["x".into()]).exit_code(), 2);
        assert_eq!(Error::Numerical("x".into()).exit_code(), 3);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(Error::Io(io).exit_code(), 4);
        assert_eq!(
            Error::Matrix(MatrixError::SingularTotal).exit_code(),
            3,
            "matrix failures are numerical"
        );
    }
}
