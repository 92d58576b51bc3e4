//! Nonnegative least squares `min_{X >= 0} ||A X - B||_F^2`.
//!
//! Columns are independent problems sharing the Gram matrix `A^T A`. Each is
//! solved by block principal pivoting (Kim & Park), which is exact whenever
//! the passive-set systems are well conditioned; when a column fails to
//! certify (singular passive block, pivoting cap) it is re-solved with
//! accelerated projected gradient.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default KKT tolerance, relative to the scale of `A^T A` and `A^T B`.
pub const DEFAULT_NNLS_TOL: f64 = 1e-10;

const PG_MAX_ITER: usize = 200_000;

/// Solves column by column. The KKT test per column is
/// `grad_i >= -tol*s` where `x_i = 0` and `|grad_i| <= tol*s` where
/// `x_i > 0`, with `grad = A^T A x - A^T b` and `s = max(1, max|A^T A|, max|A^T b|)`.
pub fn nnls(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::input(format!(
            "nnls: A has {} rows but B has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::input("nnls tolerance must be positive"));
    }
    let gram = a.tr_mul(a);
    let rhs = a.tr_mul(b);
    nnls_gram(&gram, &rhs, tol)
}

/// Same problem given `G = A^T A` and `C = A^T B`.
pub fn nnls_gram(gram: &DMatrix<f64>, rhs: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let k = gram.nrows();
    let n = rhs.ncols();
    let g_scale = gram.amax();
    let cols: Vec<Result<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let c = rhs.column(j).into_owned();
            let scale = 1.0f64.max(g_scale).max(c.amax());
            let tol_eff = tol * scale;
            if let Some(x) = bpp(gram, &c, tol_eff) {
                if kkt_residual(gram, &c, &x) <= tol_eff {
                    return Ok(x);
                }
            }
            projected_gradient(gram, &c, tol_eff)
        })
        .collect();
    let mut x = DMatrix::zeros(k, n);
    for (j, c) in cols.into_iter().enumerate() {
        x.set_column(j, &c?);
    }
    Ok(x)
}

/// Largest violation of the NNLS optimality conditions.
pub fn kkt_residual(gram: &DMatrix<f64>, c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let y = gram * x - c;
    x.iter()
        .zip(y.iter())
        .map(|(&xi, &yi)| if xi > 0.0 { yi.abs() } else { (-yi).max(0.0) } + (-xi).max(0.0))
        .fold(0.0, f64::max)
}

fn solve_passive(gram: &DMatrix<f64>, c: &DVector<f64>, passive: &[bool]) -> Option<DVector<f64>> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let mut x = DVector::zeros(passive.len());
    if idx.is_empty() {
        return Some(x);
    }
    let sub = gram.select_rows(idx.iter()).select_columns(idx.iter());
    let rhs = DVector::from_iterator(idx.len(), idx.iter().map(|&i| c[i]));
    let sol = match sub.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        // singular block (e.g. repeated columns): minimum-norm solution
        None => {
            let eps = 1e-13 * sub.amax();
            sub.svd(true, true).solve(&rhs, eps).ok()?
        }
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    for (&i, v) in idx.iter().zip(sol.iter()) {
        x[i] = *v;
    }
    Some(x)
}

fn bpp(gram: &DMatrix<f64>, c: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let k = c.len();
    let mut passive = vec![false; k];
    let mut x = DVector::zeros(k);
    let mut y = -c.clone();
    let mut backup = 3usize;
    let mut best_infeasible = k + 1;
    let max_iter = 50 * (k + 1);

    for _ in 0..max_iter {
        let infeasible: Vec<usize> = (0..k)
            .filter(|&i| if passive[i] { x[i] < 0.0 } else { y[i] < -tol })
            .collect();
        if infeasible.is_empty() {
            x.iter_mut().for_each(|v: &mut f64| *v = v.max(0.0));
            return Some(x);
        }
        if infeasible.len() < best_infeasible {
            best_infeasible = infeasible.len();
            backup = 3;
            infeasible.iter().for_each(|&i| passive[i] = !passive[i]);
        } else if backup > 0 {
            backup -= 1;
            infeasible.iter().for_each(|&i| passive[i] = !passive[i]);
        } else {
            let i = *infeasible.last().unwrap();
            passive[i] = !passive[i];
        }
        x = solve_passive(gram, c, &passive)?;
        y = gram * &x - c;
        for i in 0..k {
            if passive[i] {
                y[i] = 0.0;
            }
        }
    }
    None
}

fn projected_gradient(gram: &DMatrix<f64>, c: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let k = c.len();
    let lip = gram.clone().symmetric_eigenvalues().amax().max(f64::MIN_POSITIVE);
    let step = 1.0 / lip;
    let mut x = DVector::zeros(k);
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut resid = f64::INFINITY;
    for it in 0..PG_MAX_ITER {
        let grad = gram * &z - c;
        let next = (&z - grad * step).map(|v| v.max(0.0));
        // gradient-based momentum restart
        if (&z - &next).dot(&(&next - &x)) > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        if it % 16 == 0 {
            resid = kkt_residual(gram, c, &x);
            if resid <= tol {
                return Ok(x);
            }
        }
    }
    Err(Error::NonConvergence { what: "NNLS projected gradient", iterations: PG_MAX_ITER, residual: resid })
}
