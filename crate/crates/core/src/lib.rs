//! Ellipsoidal rounding for separable nonnegative matrix factorization.
//!
//! Given `M = F (I, K) Pi + N` with the basis columns `F` hidden among the
//! columns of `M`, find them: reduce `M` by SVD, enclose the reduced points in
//! the minimum-volume origin-centered ellipsoid and read off the points on its
//! boundary.

pub mod baselines;
pub mod docclust;
pub mod er;
pub mod error;
pub mod evalbench;
pub mod matrix;
pub mod mvee;

pub use baselines::{nnls, spa, weight_matrix, xray, SelectorConfig, SelectorKind, XrayPolicy};
pub use er::{epsilon_bound, er_exact, er_practical, mu, ErResult, InstanceDiagnostics};
pub use error::{Error, Result};
pub use matrix::{DataMatrix, ReducedEmbedding, SparseMatrix, SvdFactors};
pub use mvee::{solve_q_cutting_plane, solve_q_full, CuttingPlaneConfig, KktReport, MveeSolution};

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: &str = "1.0";
