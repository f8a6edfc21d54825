use thiserror::Error;

use crate::network::Hypothesis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed eigenvalue lists or other structural input problems.
    #[error("validation error: {0}")]
    Validation(String),

    /// A hypothesis failure that prevents the requested operation.
    #[error("{hypothesis} violated: {detail}")]
    Hypothesis { hypothesis: Hypothesis, detail: String },

    /// x = 0: the point lies on the local stable manifold and never leaves.
    #[error("point lies on the local stable manifold (infinite flight time)")]
    OnStableManifold,

    #[error("point outside the linearization chart (norm {norm} >= 1)")]
    OutsideChart { norm: f64 },

    /// The first component of M(e_±)·b_± vanishes.
    #[error("degenerate global map: {0}")]
    DegenerateGlobalMap(String),

    /// Failure on one leg of a composed return map (0-based leg index).
    #[error("leg {leg}: {source}")]
    Leg {
        leg: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("orbit escaped the chart on loop {loop_index}")]
    Escaped { loop_index: usize },

    #[error("step size underflow at t = {t}")]
    StiffAbort { t: f64 },

    #[error("eps {eps} too large: balls overlap (minimum separation {min_separation})")]
    EpsTooLarge { eps: f64, min_separation: f64 },

    #[error("cannot infer connections ({0}); supply an explicit connection list")]
    AmbiguousConnections(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("refusing to merge reports: {0}")]
    MergeRefused(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Wraps `self` with the index of the return-map leg that produced it.
    pub fn at_leg(self, leg: usize) -> Error {
        Error::Leg {
            leg,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping leg annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Leg { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for aborts caused by numerics rather than bad input.
    pub fn is_numerical_abort(&self) -> bool {
        matches!(
            self.root(),
            Error::StiffAbort { .. }
                | Error::OutsideChart { .. }
                | Error::Escaped { .. }
                | Error::OnStableManifold
                | Error::DegenerateGlobalMap(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
