use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataMatrix;
use crate::error::{Error, Result};

/// Sparse inputs whose smaller dimension exceeds this use the iterative
/// (Golub-Kahan-Lanczos) path in [`truncated_svd`].
pub const SPARSE_DENSE_CUTOFF: usize = 512;

const LANCZOS_SEED: u64 = 0x5eed_1a2c;

/// Singular value decomposition `M = U diag(s) V^T`.
///
/// Factors are always thin: `u` is `d x k`, `v` is `m x k`. When `truncated`
/// is set only the `k` leading triplets were computed, `k < min(d, m)`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
    pub thin: bool,
    pub truncated: bool,
    nrows: usize,
    ncols: usize,
}

/// `P` with `(P; 0) = U^T M^rho`, plus the left factor that produced it.
#[derive(Debug, Clone)]
pub struct ReducedEmbedding {
    pub p: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub rank_used: usize,
    /// `sigma_{rho+1}`, zero when `rho = min(d, m)`.
    pub discarded_energy: f64,
}

impl ReducedEmbedding {
    /// Columns of the rank-`rho` approximation `M^rho` at `indices`.
    pub fn low_rank_columns(&self, indices: &[usize]) -> DMatrix<f64> {
        let sub = self.p.select_columns(indices.iter());
        &self.u * sub
    }

    pub fn low_rank(&self) -> DMatrix<f64> {
        &self.u * &self.p
    }
}

/// `max(d, m) * eps * sigma_1`.
pub fn rank_threshold(nrows: usize, ncols: usize, sigma_max: f64) -> f64 {
    nrows.max(ncols) as f64 * f64::EPSILON * sigma_max
}

impl SvdFactors {
    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Count of computed singular values above [`rank_threshold`]. For a
    /// truncated decomposition this is a lower bound on the true rank.
    pub fn numerical_rank(&self) -> usize {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        if s1 <= 0.0 {
            return 0;
        }
        let tol = rank_threshold(self.nrows, self.ncols, s1);
        self.singular_values.iter().take_while(|&&s| s > tol).count()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.low_rank_dense(self.singular_values.len())
    }

    fn low_rank_dense(&self, r: usize) -> DMatrix<f64> {
        let mut us = self.u.columns(0, r).into_owned();
        for (k, mut col) in us.column_iter_mut().enumerate() {
            col *= self.singular_values[k];
        }
        us * self.v.columns(0, r).transpose()
    }

    pub fn reduce(&self, rho: usize) -> Result<ReducedEmbedding> {
        let t = self.nrows.min(self.ncols);
        if rho == 0 || rho > t {
            return Err(Error::input(format!("reduced dimension {rho} outside 1..={t}")));
        }
        let rank = self.numerical_rank();
        if rho > rank {
            return Err(Error::RankDeficient { requested: rho, rank });
        }
        let mut p = self.v.columns(0, rho).transpose();
        for (k, mut row) in p.row_iter_mut().enumerate() {
            row *= self.singular_values[k];
        }
        let discarded_energy = if rho < t {
            self.singular_values.get(rho).copied().ok_or_else(|| {
                Error::input(format!("sigma_{} was not computed", rho + 1))
            })?
        } else {
            0.0
        };
        Ok(ReducedEmbedding {
            p,
            u: self.u.columns(0, rho).into_owned(),
            rank_used: rho,
            discarded_energy,
        })
    }
}

/// Full thin SVD. Sparse inputs are densified.
pub fn svd(m: &DataMatrix) -> Result<SvdFactors> {
    dense_svd(&m.to_dense())
}

fn dense_svd(a: &DMatrix<f64>) -> Result<SvdFactors> {
    if let Some(bad) = a.iter().find(|v| !v.is_finite()) {
        return Err(Error::input(format!("non-finite entry {bad} in matrix")));
    }
    let (d, m) = a.shape();
    let t = d.min(m);
    let max_iter = 200 * t.max(1) + 1000;
    let dec = a.clone().try_svd(true, true, f64::EPSILON, max_iter).ok_or(
        Error::NonConvergence { what: "dense SVD", iterations: max_iter, residual: f64::NAN },
    )?;
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v requested");
    let s = dec.singular_values;

    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let u = u.select_columns(order.iter());
    let v = v_t.transpose().select_columns(order.iter());
    let singular_values = order.iter().map(|&k| s[k].max(0.0)).collect();
    Ok(SvdFactors { u, singular_values, v, thin: true, truncated: false, nrows: d, ncols: m })
}

/// At least the `k` leading singular triplets. Sparse matrices whose smaller
/// side exceeds [`SPARSE_DENSE_CUTOFF`] go through Golub-Kahan-Lanczos
/// bidiagonalization with full reorthogonalization; everything else gets
/// the full dense decomposition.
pub fn truncated_svd(m: &DataMatrix, k: usize) -> Result<SvdFactors> {
    let t = m.nrows().min(m.ncols());
    if k == 0 || k > t {
        return Err(Error::input(format!("requested {k} singular triplets, must be in 1..={t}")));
    }
    match m {
        DataMatrix::Sparse(_) if t > SPARSE_DENSE_CUTOFF && k < t => lanczos_svd(m, k),
        DataMatrix::Sparse(s) => dense_svd(&s.to_dense()),
        DataMatrix::Dense(a) => dense_svd(a),
    }
}

/// Best rank-`r` approximation `U Sigma^r V^T`.
pub fn best_rank_r(m: &DataMatrix, r: usize) -> Result<DataMatrix> {
    let t = m.nrows().min(m.ncols());
    if r == 0 || r > t {
        return Err(Error::input(format!("rank {r} outside 1..={t}")));
    }
    let f = svd(m)?;
    Ok(DataMatrix::Dense(f.low_rank_dense(r)))
}

pub fn numerical_rank(m: &DataMatrix) -> Result<usize> {
    Ok(svd(m)?.numerical_rank())
}

/// Reduced matrix of `m` associated with `rho`.
pub fn reduce(m: &DataMatrix, rho: usize) -> Result<ReducedEmbedding> {
    let t = m.nrows().min(m.ncols());
    if rho == 0 || rho > t {
        return Err(Error::input(format!("reduced dimension {rho} outside 1..={t}")));
    }
    truncated_svd(m, (rho + 1).min(t))?.reduce(rho)
}

fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(w);
            w.axpy(-c, b, 1.0);
        }
    }
}

fn random_orthogonal(
    dim: usize,
    basis: &[DVector<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<DVector<f64>> {
    if basis.len() >= dim {
        return None;
    }
    for _ in 0..8 {
        let mut w = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
        orthogonalize(&mut w, basis);
        let n = w.norm();
        if n > 1e-8 {
            return Some(w / n);
        }
    }
    None
}

fn lanczos_svd(a: &DataMatrix, k: usize) -> Result<SvdFactors> {
    let (d, m) = (a.nrows(), a.ncols());
    let t = d.min(m);
    let mut steps = t.min((2 * k + 10).max(k + 20));
    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let start = DVector::from_fn(m, |_, _| rng.random::<f64>() - 0.5);

    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED ^ steps as u64);
        let mut us: Vec<DVector<f64>> = Vec::with_capacity(steps);
        let mut vs: Vec<DVector<f64>> = Vec::with_capacity(steps + 1);
        let mut alphas: Vec<f64> = Vec::with_capacity(steps);
        let mut betas: Vec<f64> = Vec::with_capacity(steps);
        vs.push(start.normalize());
        let mut scale = 0.0f64;

        for j in 0..steps {
            let mut w = a.mul_vec(&vs[j]);
            if j > 0 {
                w.axpy(-betas[j - 1], &us[j - 1], 1.0);
            }
            orthogonalize(&mut w, &us);
            let mut alpha = w.norm();
            scale = scale.max(alpha);
            let u = if alpha > 1e-13 * scale.max(f64::MIN_POSITIVE) {
                w / alpha
            } else {
                alpha = 0.0;
                match random_orthogonal(d, &us, &mut rng) {
                    Some(u) => u,
                    None => break,
                }
            };
            alphas.push(alpha);
            us.push(u);

            if j + 1 == steps {
                break;
            }
            let mut z = a.tr_mul_vec(&us[j]);
            z.axpy(-alpha, &vs[j], 1.0);
            orthogonalize(&mut z, &vs);
            let mut beta = z.norm();
            scale = scale.max(beta);
            let v = if beta > 1e-13 * scale.max(f64::MIN_POSITIVE) {
                z / beta
            } else {
                beta = 0.0;
                match random_orthogonal(m, &vs, &mut rng) {
                    Some(v) => v,
                    None => break,
                }
            };
            betas.push(beta);
            vs.push(v);
        }

        let l = alphas.len();
        let mut b = DMatrix::zeros(l, l);
        for j in 0..l {
            b[(j, j)] = alphas[j];
            if j + 1 < l {
                b[(j, j + 1)] = betas[j];
            }
        }
        let small = dense_svd(&b)?;
        let kk = k.min(l);
        let ul = DMatrix::from_columns(&us[..l]);
        let vl = DMatrix::from_columns(&vs[..l]);
        let u = ul * small.u.columns(0, kk);
        let v = vl * small.v.columns(0, kk);
        let sv: Vec<f64> = small.singular_values[..kk].to_vec();

        let s1 = sv.first().copied().unwrap_or(0.0);
        let residual = (0..kk)
            .map(|i| (a.tr_mul_vec(&u.column(i).into_owned()) - v.column(i) * sv[i]).norm())
            .fold(0.0, f64::max);
        if residual <= 1e-10 * s1.max(f64::MIN_POSITIVE) || steps >= t {
            if residual > 1e-8 * s1.max(f64::MIN_POSITIVE) {
                return Err(Error::NonConvergence {
                    what: "Lanczos SVD",
                    iterations: steps,
                    residual,
                });
            }
            return Ok(SvdFactors {
                u,
                singular_values: sv,
                v,
                thin: true,
                truncated: kk < t,
                nrows: d,
                ncols: m,
            });
        }
        steps = t.min(steps * 2);
    }
}
