use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("rank deficient: requested rank {requested} but numerical rank is {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Iteration cap reached inside the ellipsoid solver. `best_weights` is
    /// the last dual iterate over all points.
    #[error("MVEE solver stopped after {iterations} iterations (scaled KKT residual {residual:e})")]
    MveeStalled {
        iterations: usize,
        residual: f64,
        best_weights: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Active index set size differs from the requested rank. Carries the
    /// 0-based candidate indices.
    #[error("ambiguous active set: found {} active points, expected {expected}", candidates.len())]
    AmbiguousActiveSet {
        candidates: Vec<usize>,
        expected: usize,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for failures caused by the numerical procedure rather than the
    /// caller's data or arguments.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::MveeStalled { .. }
                | Error::Numerical(_) | Error::AmbiguousActiveSet { .. }
        )
    }
}
