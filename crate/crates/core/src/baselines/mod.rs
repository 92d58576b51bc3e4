//! Column-selection baselines and the NNLS solver behind them.

mod nnls;
mod spa;
mod xray;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

pub use nnls::{kkt_residual, nnls, nnls_gram, DEFAULT_NNLS_TOL};
pub use spa::spa;
pub use xray::xray;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XrayPolicy {
    Rand,
    Max,
    Dist,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    Spa,
    XrayRand,
    XrayMax,
    XrayDist,
    XrayGreedy,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 5] = [
        SelectorKind::Spa,
        SelectorKind::XrayRand,
        SelectorKind::XrayMax,
        SelectorKind::XrayDist,
        SelectorKind::XrayGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Spa => "spa",
            SelectorKind::XrayRand => "xray_rand",
            SelectorKind::XrayMax => "xray_max",
            SelectorKind::XrayDist => "xray_dist",
            SelectorKind::XrayGreedy => "xray_greedy",
        }
    }

    pub fn xray_policy(self) -> Option<XrayPolicy> {
        match self {
            SelectorKind::Spa => None,
            SelectorKind::XrayRand => Some(XrayPolicy::Rand),
            SelectorKind::XrayMax => Some(XrayPolicy::Max),
            SelectorKind::XrayDist => Some(XrayPolicy::Dist),
            SelectorKind::XrayGreedy => Some(XrayPolicy::Greedy),
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    /// Accepts `xray_max`, `xray-max` and `xray(max)` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '-' || c == '(' { '_' } else { c })
            .filter(|&c| c != ')')
            .collect();
        SelectorKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::input(format!("unknown selector {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub algorithm: SelectorKind,
    /// Only used by `xray_rand`.
    pub seed: u64,
    pub nnls_tol: f64,
}

impl SelectorConfig {
    pub fn new(algorithm: SelectorKind) -> Self {
        SelectorConfig { algorithm, seed: 0, nnls_tol: DEFAULT_NNLS_TOL }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nnls_tol > 0.0) {
            return Err(Error::input("nnls_tol must be positive"));
        }
        Ok(())
    }

    /// Selects `r` distinct 0-based column indices of `m`.
    pub fn select(&self, m: &DataMatrix, r: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let out = match self.algorithm.xray_policy() {
            None => spa(m, r)?,
            Some(p) => xray(m, r, p, self.seed, self.nnls_tol)?,
        };
        debug_assert_eq!(out.len(), r);
        Ok(out)
    }
}

/// `W* = argmin_{X >= 0} ||M(I) X - M||_F^2`, an `|I| x m` matrix.
pub fn weight_matrix(m: &DataMatrix, indices: &[usize], tol: f64) -> Result<DMatrix<f64>> {
    if indices.is_empty() {
        return Err(Error::input("weight_matrix: empty index set"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= m.ncols()) {
        return Err(Error::input(format!("column index {bad} out of range")));
    }
    let basis = m.select_columns(indices);
    nnls(&basis, &m.to_dense(), tol)
}
