use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ellround::baselines::{kkt_residual, DEFAULT_NNLS_TOL};
use ellround::er::{epsilon_bound, mu};
use ellround::evalbench::gen_synthetic;
use ellround::{nnls, spa, weight_matrix, xray, DataMatrix, SelectorConfig, SelectorKind, XrayPolicy};

const POLICIES: [XrayPolicy; 4] = [XrayPolicy::Rand, XrayPolicy::Max, XrayPolicy::Dist, XrayPolicy::Greedy];

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

fn objective(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a * x - b).norm_squared()
}

/// Exhaustive NNLS: every support set, unconstrained least squares on it,
/// kept when feasible.
fn enumerate_nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let k = a.ncols();
    let mut best = b.norm_squared();
    for mask in 1u32..(1 << k) {
        let cols: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let sub = a.select_columns(cols.iter());
        let Ok(z) = sub.clone().svd(true, true).solve(b, 1e-12) else { continue };
        if z.iter().all(|&v| v >= 0.0) {
            best = best.min((sub * z - b).norm_squared());
        }
    }
    best
}

#[test]
fn spa_recovers_noiseless_bases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    let mut seed = 0;
    while checked < 100 {
        let r = rng.random_range(2..=8);
        let inst = gen_synthetic(rng.random_range(r..=30), rng.random_range(r + 1..=120), r, 0.0, seed).unwrap();
        seed += 1;
        if mu(&inst.k) >= 1.0 {
            continue;
        }
        assert_eq!(sorted(&spa(&inst.m, r).unwrap()), sorted(&inst.true_indices));
        checked += 1;
    }
}

#[test]
fn xray_recovers_noiseless_bases() {
    for seed in 0..30 {
        let inst = gen_synthetic(20, 60, 4, 0.0, 500 + seed).unwrap();
        if mu(&inst.k) >= 1.0 {
            continue;
        }
        for p in POLICIES {
            let got = xray(&inst.m, 4, p, seed, DEFAULT_NNLS_TOL).unwrap();
            assert_eq!(sorted(&got), sorted(&inst.true_indices), "{p:?} seed {seed}");
        }
    }
}

#[test]
fn weight_matrix_reproduces_separable_data() {
    for seed in 0..10 {
        let inst = gen_synthetic(20, 80, 5, 0.0, 900 + seed).unwrap();
        let a = inst.m.to_dense();
        let w = weight_matrix(&inst.m, &inst.true_indices, DEFAULT_NNLS_TOL).unwrap();
        let fit = inst.m.select_columns(&inst.true_indices) * w;
        assert!((fit - &a).norm() <= 1e-8 * a.norm());
    }
}

#[test]
fn noisy_residual_stays_within_twice_epsilon() {
    for seed in 0..10 {
        let mut inst = gen_synthetic(20, 80, 4, 0.01, 1200 + seed).unwrap();
        let diag = epsilon_bound(&inst.f, &inst.k).unwrap();
        inst.set_noise_norm(0.5 * diag.epsilon).unwrap();
        let w = weight_matrix(&inst.m, &inst.true_indices, DEFAULT_NNLS_TOL).unwrap();
        let a = inst.m.to_dense();
        let res = a - inst.m.select_columns(&inst.true_indices) * w;
        let worst = res.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(worst < 2.0 * diag.epsilon, "{worst} vs {}", diag.epsilon);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nnls_matches_enumeration(seed in any::<u64>(), rows in 2usize..12, k in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(rows, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(rows, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = nnls(&a, &b, DEFAULT_NNLS_TOL).unwrap().column(0).into_owned();
        let bv = b.column(0).into_owned();
        prop_assert!(x.iter().all(|&v| v >= 0.0));
        let ours = objective(&a, &x, &bv);
        let oracle = enumerate_nnls(&a, &bv);
        prop_assert!(ours <= oracle + 1e-8 * (1.0 + oracle), "{ours} vs {oracle}");
        prop_assert!(kkt_residual(&a.tr_mul(&a), &a.tr_mul(&bv), &x) <= 1e-8 * (1.0 + a.tr_mul(&a).amax()));
    }

    #[test]
    fn nnls_beats_clamped_least_squares(seed in any::<u64>(), rows in 3usize..20, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(rows, k, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(rows, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let bv = b.column(0).into_owned();
        let x = nnls(&a, &b, DEFAULT_NNLS_TOL).unwrap().column(0).into_owned();
        let ls = a.clone().svd(true, true).solve(&bv, 1e-12).unwrap().map(|v| v.max(0.0));
        prop_assert!(objective(&a, &x, &bv) <= objective(&a, &ls, &bv) + 1e-10);
    }

    #[test]
    fn selectors_return_distinct_valid_indices(
        seed in any::<u64>(),
        d in 2usize..10,
        m in 2usize..25,
        r in 1usize..6,
        alg in 0usize..5,
    ) {
        prop_assume!(r <= d.min(m));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, m, |_, _| rng.random::<f64>());
        let dm = DataMatrix::dense(a).unwrap();
        let cfg = SelectorConfig::new(SelectorKind::ALL[alg]).with_seed(seed);
        let out = cfg.select(&dm, r).unwrap();
        prop_assert_eq!(out.len(), r);
        prop_assert!(out.iter().all(|&i| i < m));
        prop_assert_eq!(sorted(&out).windows(2).filter(|w| w[0] == w[1]).count(), 0);
        prop_assert_eq!(cfg.select(&dm, r).unwrap(), out);
    }
}
