use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tag coincident with an anchor, or a rank-deficient normal matrix.
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// The error-state correction grew past the small-angle regime.
    #[error("filter diverged at t = {t:.3} s: |dtheta| = {dtheta_norm:.3} rad ({detail})")]
    Divergence {
        t: f64,
        dtheta_norm: f64,
        detail: String,
    },

    #[error("IMU not static: |accel mean| = {norm:.3} m/s^2, expected {expected:.3} +/- 20%")]
    NotStatic { norm: f64, expected: f64 },

    /// Input file problem anchored to a location.
    #[error("{}:{line}: {field}: {message}", file.display())]
    Input {
        file: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateGeometry(msg.into())
    }

    pub fn input(
        file: impl Into<PathBuf>,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Input {
            file: file.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
