use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::nnls::nnls;
use super::XrayPolicy;
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Greedy extreme-ray search.
///
/// Each round fits every column with the already selected ones under
/// nonnegativity, forms the residual `R = M - M(I) X*` (`R = M` in the first
/// round), picks a residual column `r_i` by `policy` and adds
/// `argmax_{j not in I} <m_j, r_i>`.
///
/// Policies for the residual column:
/// * `Rand`: uniform over columns with positive residual norm.
/// * `Max`: largest `||r_i||`.
/// * `Dist`: largest `||r_i|| / ||m_i||`, the column worst explained relative to its size.
/// * `Greedy`: largest `||R^T r_i||^2 / ||r_i||^2`, the direction carrying the most residual energy.
///
/// Returns 0-based indices in selection order; ties go to the lowest index.
pub fn xray(m: &DataMatrix, r: usize, policy: XrayPolicy, seed: u64, nnls_tol: f64) -> Result<Vec<usize>> {
    let n = m.ncols();
    if r == 0 || r > n {
        return Err(Error::input(format!("xray: r = {r} outside 1..={n}")));
    }
    let a = m.to_dense();
    let col_norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    let scale = col_norms.iter().copied().fold(0.0, f64::max);
    let floor = scale * 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(r);
    let mut taken = vec![false; n];

    for _ in 0..r {
        let res = if picked.is_empty() {
            a.clone()
        } else {
            let basis = a.select_columns(picked.iter());
            let x = nnls(&basis, &a, nnls_tol)?;
            &a - basis * x
        };
        let res_norms: Vec<f64> = res.column_iter().map(|c| c.norm()).collect();
        let live: Vec<usize> = (0..n).filter(|&i| res_norms[i] > floor).collect();
        if live.is_empty() {
            return Err(Error::Degenerate(format!(
                "xray: residual vanished after {} of {r} selections",
                picked.len()
            )));
        }
        let i = match policy {
            XrayPolicy::Rand => *live.choose(&mut rng).expect("nonempty"),
            XrayPolicy::Max => argmax(&live, |i| res_norms[i]),
            XrayPolicy::Dist => argmax(&live, |i| res_norms[i] / col_norms[i]),
            XrayPolicy::Greedy => {
                let rr: DMatrix<f64> = &res * res.transpose();
                argmax(&live, |i| {
                    let c = res.column(i);
                    (&rr * c).dot(&c) / (res_norms[i] * res_norms[i])
                })
            }
        };
        let ri = res.column(i);
        let scores = a.tr_mul(&ri);
        let admissible: Vec<usize> = (0..n).filter(|&j| !taken[j]).collect();
        if admissible.is_empty() {
            return Err(Error::Degenerate("xray: no admissible columns left".into()));
        }
        let j = argmax(&admissible, |j| scores[j]);
        taken[j] = true;
        picked.push(j);
    }
    Ok(picked)
}

fn argmax(cands: &[usize], f: impl Fn(usize) -> f64) -> usize {
    let mut best = cands[0];
    let mut best_val = f(best);
    for &c in &cands[1..] {
        let v = f(c);
        if v > best_val {
            best = c;
            best_val = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::nnls::DEFAULT_NNLS_TOL;

    fn dm(rows: usize, cols: usize, v: &[f64]) -> DataMatrix {
        DataMatrix::dense(DMatrix::from_column_slice(rows, cols, v)).unwrap()
    }

    #[test]
    fn max_policy_single_pick() {
        // residual column with the largest norm is (3, 1); scores <m_j, (3,1)>
        // are 3, 1, 10, 6 so the dominant column wins
        let m = dm(2, 4, &[1.0, 0.0, 0.0, 1.0, 3.0, 1.0, 2.0, 0.0]);
        let got = xray(&m, 1, XrayPolicy::Max, 0, DEFAULT_NNLS_TOL).unwrap();
        assert_eq!(got, vec![2]);
    }

    #[test]
    fn simplex_cone_any_policy() {
        let m = dm(3, 5, &[
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.3, 0.3, 0.4, 0.5, 0.5, 0.0,
        ]);
        for p in [XrayPolicy::Rand, XrayPolicy::Max, XrayPolicy::Dist, XrayPolicy::Greedy] {
            let mut got = xray(&m, 3, p, 9, DEFAULT_NNLS_TOL).unwrap();
            got.sort();
            assert_eq!(got, vec![0, 1, 2], "{p:?}");
        }
    }

    #[test]
    fn rand_is_reproducible() {
        let m = dm(2, 4, &[1.0, 0.1, 0.1, 1.0, 0.6, 0.5, 0.5, 0.6]);
        let a = xray(&m, 2, XrayPolicy::Rand, 42, DEFAULT_NNLS_TOL).unwrap();
        let b = xray(&m, 2, XrayPolicy::Rand, 42, DEFAULT_NNLS_TOL).unwrap();
        assert_eq!(a, b);
    }
}
