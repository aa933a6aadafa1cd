use thiserror::Error;

/// Which payload rotation axis a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Rotation about the payload x axis, actuated by the y lever arms.
    Roll,
    /// Rotation about the payload y axis, actuated by the x lever arms.
    Pitch,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Roll => f.write_str("roll"),
            Axis::Pitch => f.write_str("pitch"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate mount layout: {axis} is not controllable ({reason})")]
    DegenerateLayout { axis: Axis, reason: String },

    #[error("underdetermined payload plane: {0}")]
    UnderdeterminedPlane(String),

    #[error("terrain query ({x:.3}, {y:.3}) is outside the arena")]
    OutOfBounds { x: f64, y: f64 },

    #[error("heightmap format error at line {line}: {reason}")]
    HeightmapFormat { line: usize, reason: String },

    #[error("empty log")]
    EmptyLog,

    #[error("tick {tick} (t = {t:.3} s), robot {robot}: {source}")]
    Simulation {
        tick: u64,
        t: f64,
        robot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {value}"),
        })
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be positive and finite, got {value}"),
        })
    }
}
