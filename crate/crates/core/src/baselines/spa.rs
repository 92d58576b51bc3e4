use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

/// Successive projection: repeatedly take the column with the largest squared
/// norm and project every column onto the orthogonal complement of it.
/// Returns 0-based indices in selection order. Ties go to the lowest index.
pub fn spa(m: &DataMatrix, r: usize) -> Result<Vec<usize>> {
    let (d, n) = (m.nrows(), m.ncols());
    if r == 0 || r > d.min(n) {
        return Err(Error::input(format!("spa: r = {r} outside 1..={}", d.min(n))));
    }
    let mut res = m.to_dense();
    let scale = res.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max);
    let floor = scale * 1e-28;
    let mut picked = Vec::with_capacity(r);
    let mut taken = vec![false; n];

    for _ in 0..r {
        let mut best = None;
        let mut best_val = floor;
        for (j, col) in res.column_iter().enumerate() {
            let v = col.norm_squared();
            if !taken[j] && v > best_val {
                best = Some(j);
                best_val = v;
            }
        }
        let j = best.ok_or_else(|| {
            Error::Degenerate(format!(
                "spa: residual vanished after {} of {r} selections",
                picked.len()
            ))
        })?;
        taken[j] = true;
        picked.push(j);
        let u = res.column(j) / best_val.sqrt();
        let coef = res.tr_mul(&u);
        res.ger(-1.0, &u, &coef, 1.0);
    }
    Ok(picked)
}
