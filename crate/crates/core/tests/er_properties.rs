use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ellround::er::{candidate_set, mu};
use ellround::evalbench::{gen_synthetic, recovery_rate};
use ellround::mvee::CuttingPlaneConfig;
use ellround::{epsilon_bound, er_exact, er_practical, DataMatrix, SelectorConfig, SelectorKind};

/// Instances whose interior columns sit within `1e-7` of the unit sphere are
/// below the active-set resolution and can legitimately come back ambiguous.
fn resolvable(k: &DMatrix<f64>) -> bool {
    let mu = mu(k);
    1.0 - mu * mu > 1e-7
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s
}

#[test]
fn noiseless_instances_recover_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 200 {
        let r = rng.random_range(2..=6);
        let d = rng.random_range(r..=25);
        let m = rng.random_range(r + 1..=150);
        let inst = gen_synthetic(d, m, r, 0.0, seed).unwrap();
        seed += 1;
        if !resolvable(&inst.k) {
            // an interior column equal to a basis column must be reported as ambiguous
            if mu(&inst.k) == 1.0 {
                assert!(er_exact(&inst.m, r).is_err());
            }
            continue;
        }
        let res = er_exact(&inst.m, r).unwrap();
        assert_eq!(res.indices, sorted(&inst.true_indices), "seed {seed} d {d} m {m} r {r}");
        assert_eq!(res.candidate_set, res.indices);
        checked += 1;
    }
}

#[test]
fn small_noise_keeps_the_basis() {
    for seed in 0..40u64 {
        let mut inst = gen_synthetic(20, 100, 4, 0.01, 300 + seed).unwrap();
        if !resolvable(&inst.k) {
            continue;
        }
        let diag = epsilon_bound(&inst.f, &inst.k).unwrap();
        inst.set_noise_norm(0.5 * diag.epsilon).unwrap();
        let res = er_exact(&inst.m, 4).unwrap();
        assert_eq!(res.indices, sorted(&inst.true_indices), "seed {seed}");
        let picked = inst.m.select_columns(&inst.true_indices);
        let gap = (picked - &inst.f).singular_values().max();
        assert!(gap < diag.epsilon);
    }
}

#[test]
fn rank_five_from_rho_one() {
    let inst = gen_synthetic(20, 80, 5, 0.0, 5).unwrap();
    let st = candidate_set(&inst.m, 5, 1, &CuttingPlaneConfig::default()).unwrap();
    assert!(st.rho_used <= 5);
    assert!(st.candidates.len() >= 5);
}

#[test]
fn epsilon_agrees_with_gram_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let f = DMatrix::from_fn(10, 4, |_, _| rng.random::<f64>());
        let k = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>() / 4.0);
        let diag = epsilon_bound(&f, &k).unwrap();
        let eig = (f.transpose() * &f).symmetric_eigen().eigenvalues.min();
        let mu = k.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!((diag.sigma - eig.sqrt()).abs() <= 1e-10 * diag.sigma.max(1.0));
        assert!((diag.epsilon - eig.sqrt() * (1.0 - mu) / 4.0).abs() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn positive_scaling_changes_nothing(seed in any::<u64>(), c in 0.01f64..100.0) {
        let inst = gen_synthetic(15, 60, 4, 0.0, seed).unwrap();
        prop_assume!(resolvable(&inst.k));
        let a = er_exact(&inst.m, 4).unwrap();
        let b = er_exact(&inst.m.scaled(c), 4).unwrap();
        prop_assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn column_permutation_is_equivariant(seed in any::<u64>()) {
        let inst = gen_synthetic(15, 60, 4, 0.0, seed).unwrap();
        prop_assume!(resolvable(&inst.k));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..60).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permuted = DataMatrix::dense(inst.m.select_columns(&perm)).unwrap();
        let a = er_exact(&inst.m, 4).unwrap();
        let b = er_exact(&permuted, 4).unwrap();
        let mapped = sorted(&b.indices.iter().map(|&k| perm[k]).collect::<Vec<_>>());
        prop_assert_eq!(a.indices, mapped);
    }

    #[test]
    fn selection_lies_in_candidates(seed in any::<u64>(), delta in 0.0f64..0.5, alg in 0usize..5) {
        let inst = gen_synthetic(20, 80, 5, delta, seed).unwrap();
        let sel = SelectorConfig::new(SelectorKind::ALL[alg]).with_seed(seed);
        let res = er_practical(&inst.m, 5, 5, &sel).unwrap();
        prop_assert_eq!(res.indices.len(), 5);
        prop_assert!(res.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(res.indices.iter().all(|i| res.candidate_set.contains(i)));
        prop_assert!(res.candidate_set.len() >= res.rho_used);
        prop_assert!(res.rho_used >= 5);
        if delta == 0.0 && resolvable(&inst.k) {
            prop_assert_eq!(recovery_rate(&inst.true_indices, &res.indices), 1.0);
        }
    }
}
