use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use ellround::mvee::{
    delta, init_working_set, solve_q_cutting_plane, solve_q_full, solve_q_full_with, CuttingPlaneConfig,
    MveeSolution, DEFAULT_TOL,
};

const TIGHT: f64 = 1e-12;

fn tight() -> CuttingPlaneConfig {
    CuttingPlaneConfig::with_tol(TIGHT)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn well_conditioned(p: &DMatrix<f64>) -> bool {
    let s = p.clone().singular_values();
    s.min() > 0.1 * s.max()
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn check_invariants(p: &DMatrix<f64>, sol: &MveeSolution, cfg: &CuttingPlaneConfig) {
    let n = p.nrows();
    assert!(sol.l.clone().cholesky().is_some());
    assert!(sol.u.iter().all(|&w| w >= 0.0));
    assert!((sol.u.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    let max_delta = sol.deltas.iter().copied().fold(f64::MIN, f64::max);
    assert!(max_delta <= 1.0 + 10.0 * cfg.tol, "max delta {max_delta}");
    for (i, &dl) in sol.deltas.iter().enumerate() {
        assert_eq!(sol.active_indices.contains(&i), dl >= 1.0 - cfg.active_tol);
        let direct = delta(&sol.l, &p.column(i).into_owned());
        assert!((direct - dl).abs() <= 1e-12 * (1.0 + dl));
    }
    assert!(sol.active_indices.len() >= n);
    let k = sol.kkt;
    for v in [k.stationarity_residual, k.complementarity_residual, k.primal_violation, k.dual_violation] {
        assert!(v.is_finite() && v >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn solutions_satisfy_invariants(seed in any::<u64>(), n in 2usize..6, extra in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(&mut rng, n, n + extra);
        let cfg = CuttingPlaneConfig::default();
        check_invariants(&p, &solve_q_full(&p, cfg.tol).unwrap(), &cfg);
        check_invariants(&p, &solve_q_cutting_plane(&p, &cfg).unwrap(), &cfg);
    }

    #[test]
    fn sign_flips_change_nothing(seed in any::<u64>(), n in 2usize..5, extra in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(&mut rng, n, n + extra);
        let mut q = p.clone();
        for mut c in q.column_iter_mut() {
            if rng.random::<bool>() {
                c.neg_mut();
            }
        }
        let a = solve_q_full_with(&p, &tight()).unwrap();
        let b = solve_q_full_with(&q, &tight()).unwrap();
        prop_assert!((&a.l - &b.l).amax() <= 1e-12 * a.l.amax());
        prop_assert_eq!(a.active_indices, b.active_indices);
        for (x, y) in a.deltas.iter().zip(&b.deltas) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn column_permutation_is_equivariant(seed in any::<u64>(), n in 2usize..5, extra in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(&mut rng, n, n + extra);
        prop_assume!(well_conditioned(&p));
        let m = p.ncols();
        let mut perm: Vec<usize> = (0..m).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        // column k of q is column perm[k] of p
        let q = p.select_columns(perm.iter());
        let a = solve_q_full_with(&p, &tight()).unwrap();
        let b = solve_q_full_with(&q, &tight()).unwrap();
        prop_assert!(rel(&b.l, &a.l) <= 1e-10, "{}", rel(&b.l, &a.l));
        for k in 0..m {
            prop_assert!((b.deltas[k] - a.deltas[perm[k]]).abs() <= 1e-9);
            prop_assert!((b.u[k] - a.u[perm[k]]).abs() <= 1e-6);
        }
    }

    #[test]
    fn orthogonal_change_of_basis(seed in any::<u64>(), n in 2usize..5, extra in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(&mut rng, n, n + extra);
        prop_assume!(well_conditioned(&p));
        let q = gaussian(&mut rng, n, n).qr().q();
        let a = solve_q_full_with(&p, &tight()).unwrap();
        let b = solve_q_full_with(&(&q * &p), &tight()).unwrap();
        let mapped = &q * &a.l * q.transpose();
        prop_assert!(rel(&b.l, &mapped) <= 1e-8, "{}", rel(&b.l, &mapped));
    }

    #[test]
    fn scaling_law(seed in any::<u64>(), n in 2usize..5, extra in 1usize..30, c in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(&mut rng, n, n + extra);
        prop_assume!(well_conditioned(&p));
        let a = solve_q_full_with(&p, &tight()).unwrap();
        let b = solve_q_full_with(&(&p * c), &tight()).unwrap();
        prop_assert!(rel(&(b.l * (c * c)), &a.l) <= 1e-10);
        prop_assert_eq!(a.active_indices, b.active_indices);
    }

    #[test]
    fn simplex_vertices_are_the_active_set(seed in any::<u64>(), r in 2usize..7, ell in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(&mut rng, r, r);
        prop_assume!(g.clone().singular_values().min() > 1e-3);
        let unit = Gamma::new(1.0, 1.0).unwrap();
        let mut p = DMatrix::zeros(r, r + ell);
        p.columns_mut(0, r).copy_from(&g);
        for j in 0..ell {
            let w: Vec<f64> = (0..r).map(|_| unit.sample(&mut rng)).collect();
            let s: f64 = w.iter().sum();
            let k = DVector::from_iterator(r, w.into_iter().map(|v| v / s));
            prop_assume!(k.norm_squared() < 1.0 - 1e-6);
            p.set_column(r + j, &(&g * k));
        }
        let sol = solve_q_full(&p, DEFAULT_TOL).unwrap();
        prop_assert_eq!(sol.active_indices, (0..r).collect::<Vec<_>>());
    }

    #[test]
    fn signed_weights_inside_unit_ball(seed in any::<u64>(), r in 2usize..7, ell in 1usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = gaussian(&mut rng, r, r);
        prop_assume!(g.clone().singular_values().min() > 1e-3);
        let mut p = DMatrix::zeros(r, r + ell);
        p.columns_mut(0, r).copy_from(&g);
        for j in 0..ell {
            let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let k = &z * (0.95 * rng.random::<f64>() / z.norm());
            p.set_column(r + j, &(&g * k));
        }
        let sol = solve_q_full(&p, DEFAULT_TOL).unwrap();
        prop_assert_eq!(sol.active_indices, (0..r).collect::<Vec<_>>());
    }

    #[test]
    fn cutting_plane_covers_every_point(seed in any::<u64>(), n in 2usize..6, m in 20usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = gaussian(&mut rng, n, m);
        let cfg = CuttingPlaneConfig::default();
        let sol = solve_q_cutting_plane(&p, &cfg).unwrap();
        let worst = p.column_iter().map(|c| delta(&sol.l, &c.into_owned())).fold(f64::MIN, f64::max);
        prop_assert!(worst <= 1.0 + 10.0 * cfg.tol);
        let full = solve_q_full(&p, cfg.tol).unwrap();
        prop_assert_eq!(&sol.active_indices, &full.active_indices);
        prop_assert!(rel(&sol.l, &full.l) <= 1e-4);
    }
}

/// Multiplicative D-optimal design updates, `u_i <- u_i q_i / n`, run to
/// convergence. Returns `n ln n + log det Omega(u)`, a lower bound on the
/// optimal `-log det L` that tightens as the iteration converges.
fn multiplicative_oracle(p: &DMatrix<f64>, iters: usize) -> f64 {
    let (n, m) = p.shape();
    let mut u = vec![1.0 / m as f64; m];
    let omega = |u: &[f64]| {
        let mut o = DMatrix::zeros(n, n);
        for (i, c) in p.column_iter().enumerate() {
            o += c * c.transpose() * u[i];
        }
        o
    };
    for _ in 0..iters {
        let inv = omega(&u).try_inverse().unwrap();
        for (i, c) in p.column_iter().enumerate() {
            u[i] *= (c.transpose() * &inv * c)[0] / n as f64;
        }
        let s: f64 = u.iter().sum();
        u.iter_mut().for_each(|w| *w /= s);
    }
    n as f64 * (n as f64).ln() + omega(&u).determinant().ln()
}

#[test]
fn objective_matches_multiplicative_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let p = gaussian(&mut rng, 3, 12);
        let sol = solve_q_full(&p, DEFAULT_TOL).unwrap();
        let oracle = multiplicative_oracle(&p, 20_000);
        assert!(sol.objective >= oracle - 1e-9, "{} < {oracle}", sol.objective);
        assert!((sol.objective - oracle).abs() <= 1e-3 * oracle.abs().max(1.0));
    }
}

#[test]
fn interior_cloud_keeps_unit_ball() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = DMatrix::zeros(2, 102);
    p[(0, 0)] = 1.0;
    p[(1, 1)] = 1.0;
    for j in 2..102 {
        let z = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        p.set_column(j, &(&z * (0.5 * rng.random::<f64>() / z.norm())));
    }
    let cfg = CuttingPlaneConfig::default();
    let sol = solve_q_cutting_plane(&p, &cfg).unwrap();
    let batch = ((102.0 - 4.0) / cfg.eta).ceil() as usize;
    assert!(sol.trace.iter().all(|t| t.working_set_size <= 4 + batch));
    assert!((&sol.l - DMatrix::identity(2, 2)).amax() < 1e-8);
    assert!(sol.deltas.iter().all(|&d| d <= 1.0 + 1e-9));
    assert_eq!(sol.active_indices, vec![0, 1]);
}

#[test]
fn greedy_start_spans_the_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 2..8 {
        let p = gaussian(&mut rng, n, 3 * n);
        let ws = init_working_set(&p).unwrap();
        assert_eq!(ws.len(), n);
        assert!(p.select_columns(ws.iter()).determinant().abs() > 1e-10);
    }
}

#[test]
fn random_cloud_cutting_plane_matches_full() {
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let p = gaussian(&mut rng, 10, 2000);
    let full = solve_q_full(&p, DEFAULT_TOL).unwrap();
    let cp = solve_q_cutting_plane(&p, &CuttingPlaneConfig::default()).unwrap();
    assert!(cp.trace.len() > 1);
    assert_eq!(cp.active_indices, full.active_indices);
    assert!(rel(&cp.l, &full.l) <= 1e-4);
}
