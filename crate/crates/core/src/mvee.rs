//! Origin-centered minimum-volume enclosing ellipsoid of `{±p_1, ..., ±p_m}`.
//!
//! The primal problem is `min -log det L  s.t.  p_i^T L p_i <= 1, L > 0`; its
//! dual maximizes `log det Omega(u)` over the unit simplex, with
//! `Omega(u) = P diag(u) P^T` and optimal `L = Omega(u)^{-1} / n`.
//!
//! The dual is solved with Khachiyan's barycentric coordinate ascent plus
//! Wolfe away steps (Todd-Yildirim). Each step moves weight toward the most
//! violated point or away from the least useful support point, and keeps
//! `Omega^{-1}` and the per-point values `p_i^T Omega^{-1} p_i` current with
//! rank-one updates, so an iteration costs `O(n |W| + n^2)`.
//!
//! [`solve_q_cutting_plane`] wraps the inner solver in a working-set loop:
//! solve over a subset, add the worst violators from outside it, drop points
//! well inside the ellipsoid, repeat until no outside point violates the
//! ellipsoid. Central symmetry is implicit throughout: only the `m` points are
//! stored, since `p p^T` and the quadratic form ignore the sign.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};

/// Residuals of the optimality system at a returned solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktReport {
    /// `||n L Omega(u) - I||_F`
    pub stationarity_residual: f64,
    /// `max_i |u_i (1 - p_i^T L p_i)|`
    pub complementarity_residual: f64,
    /// `max(0, max_i p_i^T L p_i - 1)`
    pub primal_violation: f64,
    /// `max(0, -min_i u_i)`
    pub dual_violation: f64,
}

/// Default relative optimality tolerance of the inner solver.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Default classification tolerance, ten times [`DEFAULT_TOL`]. Data columns
/// lying within this distance of the boundary cannot be told apart from
/// vertices, so it is kept as tight as the solver accuracy allows.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CuttingPlaneConfig {
    /// Working-set points with `delta <= theta` (and zero weight) are dropped.
    pub theta: f64,
    /// Each expansion adds up to `ceil((m - 2n) / eta)` violators.
    pub eta: f64,
    /// Relative optimality tolerance of the inner solver.
    pub tol: f64,
    /// `delta >= 1 - active_tol` classifies a point as active.
    pub active_tol: f64,
    pub max_outer: usize,
    /// Cap on inner iterations summed over the whole solve.
    pub max_inner: usize,
}

impl Default for CuttingPlaneConfig {
    fn default() -> Self {
        CuttingPlaneConfig {
            theta: 0.9999,
            eta: 5.0,
            tol: DEFAULT_TOL,
            active_tol: DEFAULT_ACTIVE_TOL,
            max_outer: 1000,
            max_inner: 2_000_000,
        }
    }
}

impl CuttingPlaneConfig {
    pub fn with_tol(tol: f64) -> Self {
        CuttingPlaneConfig { tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta < 1.0) || !self.theta.is_finite() {
            return Err(Error::input(format!("theta must be < 1, got {}", self.theta)));
        }
        if !(self.eta >= 1.0) || !self.eta.is_finite() {
            return Err(Error::input(format!("eta must be >= 1, got {}", self.eta)));
        }
        if !(self.tol > 0.0) || !(self.active_tol > 0.0) {
            return Err(Error::input("tolerances must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::input("iteration caps must be positive"));
        }
        Ok(())
    }
}

/// One outer iteration of the working-set loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuterTrace {
    pub iter: usize,
    pub working_set_size: usize,
    /// Largest `delta_L(p)` over all `m` points.
    pub max_delta: f64,
    /// `-log det L`
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct MveeSolution {
    /// Shape matrix, `n x n` symmetric positive definite.
    pub l: DMatrix<f64>,
    /// Dual weights over all `m` points.
    pub u: Vec<f64>,
    /// 0-based indices with `delta >= 1 - active_tol`, ascending.
    pub active_indices: Vec<usize>,
    /// `delta_L(p_i) = p_i^T L p_i` for every point.
    pub deltas: Vec<f64>,
    pub kkt: KktReport,
    /// `-log det L`
    pub objective: f64,
    pub inner_iterations: usize,
    pub trace: Vec<OuterTrace>,
}

impl MveeSolution {
    pub fn dim(&self) -> usize {
        self.l.nrows()
    }
}

/// `Omega(u) = sum_i u_i p_i p_i^T`.
pub fn omega(p: &DMatrix<f64>, u: &[f64]) -> Result<DMatrix<f64>> {
    if p.ncols() != u.len() {
        return Err(Error::input(format!(
            "weight vector has {} entries for {} points",
            u.len(),
            p.ncols()
        )));
    }
    let n = p.nrows();
    let mut om = DMatrix::zeros(n, n);
    for (col, &w) in p.column_iter().zip(u) {
        if w != 0.0 {
            om.ger(w, &col, &col, 1.0);
        }
    }
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (om[(i, j)] + om[(j, i)]);
            om[(i, j)] = v;
            om[(j, i)] = v;
        }
    }
    Ok(om)
}

/// `delta_L(p) = <p p^T, L> = p^T L p`.
pub fn delta(l: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    p.dot(&(l * p))
}

/// Cholesky of `Omega`, retrying once with `1e-12 trace/n` jitter.
fn factor(om: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(om.clone()) {
        return Ok(c);
    }
    let n = om.nrows();
    let jitter = 1e-12 * om.trace() / n as f64;
    let mut shifted = om.clone();
    for i in 0..n {
        shifted[(i, i)] += jitter;
    }
    Cholesky::new(shifted)
        .ok_or_else(|| Error::Numerical("Omega(u) lost positive definiteness".into()))
}

/// Column-wise `p_i^T Omega^{-1} p_i` via a triangular solve.
fn quad_forms(chol: &Cholesky<f64, Dyn>, pts: &DMatrix<f64>) -> Vec<f64> {
    let z = chol.l().solve_lower_triangular(pts).expect("Cholesky factor is nonsingular");
    z.column_iter().map(|c| c.norm_squared()).collect()
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Greedy spanning subset: repeatedly take the point with the largest
/// component orthogonal to the span of those already chosen. Each choice
/// stands for the pair `±p`, so `n` indices give the `2n` crosspolytope
/// vertices. Ties go to the lowest index.
pub fn init_working_set(p: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, m) = p.shape();
    if n == 0 || m == 0 {
        return Err(Error::input("empty point set"));
    }
    let mut resid = p.clone();
    let scale = p.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = 1e-10 * scale;
    let mut chosen = Vec::with_capacity(n);
    for k in 0..n {
        let mut best = None;
        let mut best_norm = tol;
        for (j, c) in resid.column_iter().enumerate() {
            let v = c.norm();
            if v > best_norm {
                best_norm = v;
                best = Some(j);
            }
        }
        let Some(j) = best else {
            return Err(Error::RankDeficient { requested: n, rank: k });
        };
        chosen.push(j);
        let q = resid.column(j) / best_norm;
        let coeffs = resid.tr_mul(&q);
        resid.ger(-1.0, &q, &coeffs, 1.0);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Dual iterate restricted to a working set.
struct Inner<'a> {
    n: usize,
    pts: &'a DMatrix<f64>,
    u: Vec<f64>,
    minv: DMatrix<f64>,
    /// `p_i^T Omega^{-1} p_i` for the working-set points.
    q: Vec<f64>,
    since_refresh: usize,
}

const REFRESH_EVERY: usize = 256;

impl<'a> Inner<'a> {
    fn new(pts: &'a DMatrix<f64>, u: Vec<f64>) -> Result<Self> {
        let n = pts.nrows();
        let mut s = Inner { n, pts, u, minv: DMatrix::zeros(n, n), q: Vec::new(), since_refresh: 0 };
        s.refresh()?;
        Ok(s)
    }

    fn refresh(&mut self) -> Result<()> {
        let total: f64 = self.u.iter().sum();
        self.u.iter_mut().for_each(|w| *w /= total);
        let om = omega(self.pts, &self.u)?;
        let chol = factor(&om)?;
        self.q = quad_forms(&chol, self.pts);
        self.minv = chol.inverse();
        self.since_refresh = 0;
        Ok(())
    }

    /// Largest `q / n - 1` over the working set and largest `1 - q / n` over
    /// the support, with their positions.
    fn gaps(&self) -> ((usize, f64), (usize, f64)) {
        let n = self.n as f64;
        let mut up = (0, f64::NEG_INFINITY);
        let mut away = (usize::MAX, f64::NEG_INFINITY);
        for (i, (&qi, &ui)) in self.q.iter().zip(&self.u).enumerate() {
            let g = qi / n - 1.0;
            if g > up.1 {
                up = (i, g);
            }
            if ui > 0.0 && -g > away.1 {
                away = (i, -g);
            }
        }
        (up, away)
    }

    /// Moves to `(1 - lambda) u + lambda e_j`.
    fn step(&mut self, j: usize, lambda: f64, drop: bool) -> Result<()> {
        let p = self.pts.column(j);
        let g = &self.minv * p;
        let qj = self.q[j];
        let denom = 1.0 - lambda + lambda * qj;
        if !(denom > 1e-12) {
            // rank-one update would be unstable; apply the step and refactor
            self.apply_weights(j, lambda, drop);
            return self.refresh();
        }
        let c = lambda / denom;
        let s = self.pts.tr_mul(&g);
        let inv = 1.0 / (1.0 - lambda);
        for (qi, si) in self.q.iter_mut().zip(s.iter()) {
            *qi = (*qi - c * si * si) * inv;
        }
        self.minv.ger(-c, &g, &g, 1.0);
        self.minv *= inv;
        self.apply_weights(j, lambda, drop);
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh()?;
        }
        Ok(())
    }

    fn apply_weights(&mut self, j: usize, lambda: f64, drop: bool) {
        let keep = 1.0 - lambda;
        self.u.iter_mut().for_each(|w| *w *= keep);
        self.u[j] += lambda;
        if drop || self.u[j] < 0.0 {
            self.u[j] = 0.0;
        }
    }

    /// Runs until both gaps are `<= tol` on freshly factored values. Returns
    /// the iteration count.
    fn solve(&mut self, tol: f64, budget: usize) -> Result<usize> {
        let n = self.n as f64;
        let mut iters = 0;
        loop {
            let ((j, up), (k, away)) = self.gaps();
            if up <= tol && away <= tol {
                if self.since_refresh == 0 {
                    return Ok(iters);
                }
                self.refresh()?;
                continue;
            }
            if iters >= budget {
                return Err(Error::MveeStalled {
                    iterations: iters,
                    residual: up.max(away),
                    best_weights: Vec::new(),
                });
            }
            iters += 1;
            if up >= away {
                let qj = self.q[j];
                let lambda = (qj - n) / (n * (qj - 1.0));
                self.step(j, lambda, false)?;
            } else {
                let uk = self.u[k];
                let qk = self.q[k];
                let lo = -uk / (1.0 - uk);
                let opt = if qk > 1.0 { (qk - n) / (n * (qk - 1.0)) } else { lo };
                if opt <= lo {
                    self.step(k, lo, true)?;
                } else {
                    self.step(k, opt, false)?;
                }
            }
        }
    }
}

fn check_input(p: &DMatrix<f64>, cfg: &CuttingPlaneConfig) -> Result<()> {
    cfg.validate()?;
    if p.nrows() == 0 || p.ncols() == 0 {
        return Err(Error::input("empty point set"));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite point coordinate"));
    }
    if p.ncols() < p.nrows() {
        return Err(Error::RankDeficient { requested: p.nrows(), rank: p.ncols() });
    }
    Ok(())
}

/// Builds the reported solution from dual weights over all points.
fn finish(
    p: &DMatrix<f64>,
    u: Vec<f64>,
    active_tol: f64,
    inner_iterations: usize,
    trace: Vec<OuterTrace>,
) -> Result<MveeSolution> {
    let n = p.nrows();
    let nf = n as f64;
    let total: f64 = u.iter().sum();
    let u: Vec<f64> = u.iter().map(|w| w / total).collect();
    let om = omega(p, &u)?;
    let chol = factor(&om)?;
    let mut l = chol.inverse() / nf;
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (l[(i, j)] + l[(j, i)]);
            l[(i, j)] = v;
            l[(j, i)] = v;
        }
    }
    let deltas: Vec<f64> = quad_forms(&chol, p).into_iter().map(|q| q / nf).collect();
    let objective = log_det(&chol) + nf * nf.ln();

    let stationarity_residual =
        ((&l * &om) * nf - DMatrix::<f64>::identity(n, n)).norm();
    let complementarity_residual =
        u.iter().zip(&deltas).map(|(w, d)| (w * (1.0 - d)).abs()).fold(0.0, f64::max);
    let max_delta = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    let kkt = KktReport {
        stationarity_residual,
        complementarity_residual,
        primal_violation: (max_delta - 1.0).max(0.0),
        dual_violation: (-min_u).max(0.0),
    };
    let active_indices = active_from_deltas(&deltas, active_tol);
    Ok(MveeSolution { l, u, active_indices, deltas, kkt, objective, inner_iterations, trace })
}

fn active_from_deltas(deltas: &[f64], active_tol: f64) -> Vec<usize> {
    deltas
        .iter()
        .enumerate()
        .filter(|(_, &d)| d >= 1.0 - active_tol)
        .map(|(i, _)| i)
        .collect()
}

/// `{i : delta_L(p_i) >= 1 - active_tol}`.
pub fn active_points(sol: &MveeSolution, active_tol: f64) -> Vec<usize> {
    active_from_deltas(&sol.deltas, active_tol)
}

/// Solves over every point at once with default classification tolerance.
pub fn solve_q_full(p: &DMatrix<f64>, tol: f64) -> Result<MveeSolution> {
    solve_q_full_with(p, &CuttingPlaneConfig::with_tol(tol))
}

pub fn solve_q_full_with(p: &DMatrix<f64>, cfg: &CuttingPlaneConfig) -> Result<MveeSolution> {
    check_input(p, cfg)?;
    let m = p.ncols();
    let init = init_working_set(p)?;
    let mut u = vec![0.0; m];
    for &i in &init {
        u[i] = 1.0 / init.len() as f64;
    }
    let mut inner = Inner::new(p, u)?;
    let iters = inner.solve(cfg.tol, cfg.max_inner).map_err(|e| attach_best(e, &inner.u))?;
    finish(p, inner.u, cfg.active_tol, iters, Vec::new())
}

fn attach_best(e: Error, u: &[f64]) -> Error {
    match e {
        Error::MveeStalled { iterations, residual, .. } => {
            Error::MveeStalled { iterations, residual, best_weights: u.to_vec() }
        }
        other => other,
    }
}

/// Working-set solve. Falls back to [`solve_q_full_with`] when `m <= 2n`,
/// since no point could ever be cut.
pub fn solve_q_cutting_plane(p: &DMatrix<f64>, cfg: &CuttingPlaneConfig) -> Result<MveeSolution> {
    check_input(p, cfg)?;
    let (n, m) = p.shape();
    if m <= 2 * n {
        return solve_q_full_with(p, cfg);
    }
    let nf = n as f64;
    let batch = (((m - 2 * n) as f64) / cfg.eta).ceil().max(1.0) as usize;

    let mut ws = init_working_set(p)?;
    let mut u_ws = vec![1.0 / ws.len() as f64; ws.len()];
    let mut total_inner = 0usize;
    let mut trace = Vec::new();
    let mut in_ws = vec![false; m];

    for outer in 1..=cfg.max_outer {
        let pts = p.select_columns(ws.iter());
        let mut inner = Inner::new(&pts, u_ws)?;
        let budget = cfg.max_inner.saturating_sub(total_inner);
        let solved = inner.solve(cfg.tol, budget);
        let u_local = inner.u.clone();
        let to_global = |u_local: &[f64]| {
            let mut u = vec![0.0; m];
            for (&i, &w) in ws.iter().zip(u_local) {
                u[i] = w;
            }
            u
        };
        let iters = solved.map_err(|e| attach_best(e, &to_global(&u_local)))?;
        total_inner += iters;

        // deltas of every point under the current L = Omega^{-1} / n
        let mp = &inner.minv * p;
        let deltas: Vec<f64> =
            p.column_iter().zip(mp.column_iter()).map(|(a, b)| a.dot(&b) / nf).collect();
        in_ws.iter_mut().for_each(|b| *b = false);
        ws.iter().for_each(|&i| in_ws[i] = true);

        let max_delta = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let objective = nf * nf.ln() - inner.minv.clone().determinant().ln();
        trace.push(OuterTrace { iter: outer, working_set_size: ws.len(), max_delta, objective });

        let mut violators: Vec<usize> =
            (0..m).filter(|&i| !in_ws[i] && deltas[i] > 1.0 + cfg.tol).collect();
        if violators.is_empty() {
            return finish(p, to_global(&u_local), cfg.active_tol, total_inner, trace);
        }
        violators.sort_by(|&a, &b| deltas[b].total_cmp(&deltas[a]).then(a.cmp(&b)));
        violators.truncate(batch);

        // shrink: interior points carrying no weight
        let mut next: Vec<(usize, f64)> = ws
            .iter()
            .zip(&u_local)
            .filter(|(&i, &w)| w > 0.0 || deltas[i] > cfg.theta)
            .map(|(&i, &w)| (i, w))
            .collect();
        next.extend(violators.into_iter().map(|i| (i, 0.0)));
        next.sort_by_key(|&(i, _)| i);
        ws = next.iter().map(|&(i, _)| i).collect();
        u_ws = next.iter().map(|&(_, w)| w).collect();
    }
    Err(Error::NonConvergence {
        what: "cutting-plane MVEE",
        iterations: cfg.max_outer,
        residual: trace.last().map_or(f64::NAN, |t| t.max_delta - 1.0),
    })
}

/// Writes the outer-iteration trace as `iter,working_set_size,max_delta,objective`.
pub fn write_trace_csv<W: std::io::Write>(mut w: W, trace: &[OuterTrace]) -> Result<()> {
    writeln!(w, "iter,working_set_size,max_delta,objective")?;
    for t in trace {
        writeln!(
            w,
            "{},{},{},{}",
            t.iter,
            t.working_set_size,
            crate::matrix::io::format_f64(t.max_delta),
            crate::matrix::io::format_f64(t.objective)
        )?;
    }
    Ok(())
}
