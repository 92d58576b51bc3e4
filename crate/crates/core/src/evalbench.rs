//! Synthetic noisy separable instances and the noise-sweep benchmark.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{weight_matrix, SelectorConfig, SelectorKind, DEFAULT_NNLS_TOL};
use crate::er::{candidate_set, select_from};
use crate::error::{Error, Result};
use crate::matrix::DataMatrix;
use crate::mvee::CuttingPlaneConfig;
use crate::SCHEMA_VERSION;

/// `M = F (I, K) Pi + N` together with its factors.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    /// `d x r`, entries uniform on `[0, 1]`.
    pub f: DMatrix<f64>,
    /// `r x (m - r)`, columns Dirichlet distributed.
    pub k: DMatrix<f64>,
    /// Dirichlet parameters, uniform on `(0, 1]`.
    pub alpha: Vec<f64>,
    /// Column `c` of `(F, FK)` lands at position `perm[c]` of `M`.
    pub perm: Vec<usize>,
    pub noise: DMatrix<f64>,
    pub m: DataMatrix,
    /// `true_indices[c] = perm[c]`: where column `c` of `F` ended up.
    pub true_indices: Vec<usize>,
    pub delta: f64,
    pub seed: u64,
}

impl SyntheticInstance {
    /// Noiseless part `F (I, K) Pi`.
    pub fn separable_part(&self) -> DMatrix<f64> {
        let (d, r) = self.f.shape();
        let mcols = self.perm.len();
        let fk = &self.f * &self.k;
        let mut a = DMatrix::zeros(d, mcols);
        for c in 0..mcols {
            let src = if c < r { self.f.column(c) } else { fk.column(c - r) };
            a.set_column(self.perm[c], &src);
        }
        a
    }

    /// Recomputes `M` from the stored factors.
    pub fn assemble(&self) -> DMatrix<f64> {
        self.separable_part() + &self.noise
    }

    /// Rescales the noise to spectral norm `target` and rebuilds `M`.
    pub fn set_noise_norm(&mut self, target: f64) -> Result<()> {
        let cur = crate::er::spectral_norm(&self.noise)?;
        if cur == 0.0 {
            return Err(Error::input("instance has no noise to rescale"));
        }
        self.noise *= target / cur;
        self.m = DataMatrix::dense(self.assemble())?;
        Ok(())
    }
}

fn sample_dirichlet(gammas: &[Gamma<f64>], rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        for (o, g) in out.iter_mut().zip(gammas) {
            *o = g.sample(rng);
        }
        let s: f64 = out.iter().sum();
        if s > 0.0 && s.is_finite() {
            out.iter_mut().for_each(|v| *v /= s);
            return;
        }
    }
}

fn instance_from_rng(d: usize, m: usize, r: usize, delta: f64, seed: u64, rng: &mut ChaCha8Rng) -> Result<SyntheticInstance> {
    if r == 0 || r > d.min(m) {
        return Err(Error::input(format!("need 1 <= r <= min(d, m), got r = {r}, d = {d}, m = {m}")));
    }
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::input(format!("noise level must be finite and >= 0, got {delta}")));
    }
    let f = DMatrix::from_fn(d, r, |_, _| rng.random::<f64>());
    let alpha: Vec<f64> = (0..r)
        .map(|_| loop {
            let a = rng.random::<f64>();
            if a > 0.0 {
                break a;
            }
        })
        .collect();
    let gammas: Vec<Gamma<f64>> =
        alpha.iter().map(|&a| Gamma::new(a, 1.0).expect("positive shape")).collect();
    let ell = m - r;
    let mut k = DMatrix::zeros(r, ell);
    let mut buf = vec![0.0; r];
    for j in 0..ell {
        sample_dirichlet(&gammas, rng, &mut buf);
        k.column_mut(j).copy_from_slice(&buf);
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let noise = DMatrix::from_fn(d, m, |_, _| delta * rng.sample::<f64, _>(StandardNormal));
    let true_indices = perm[..r].to_vec();
    let mut inst = SyntheticInstance {
        f,
        k,
        alpha,
        perm,
        noise,
        m: DataMatrix::Dense(DMatrix::zeros(1, 1)),
        true_indices,
        delta,
        seed,
    };
    inst.m = DataMatrix::dense(inst.assemble())?;
    Ok(inst)
}

/// Draws an instance: `F` uniform on `[0,1]`, `K` columns from a Dirichlet
/// distribution whose `r` parameters are uniform on `[0,1]`, a random column
/// permutation and i.i.d. Gaussian noise with standard deviation `delta`.
pub fn gen_synthetic(d: usize, m: usize, r: usize, delta: f64, seed: u64) -> Result<SyntheticInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    instance_from_rng(d, m, r, delta, seed, &mut rng)
}

/// `|I_true ∩ I_est| / |I_true|`.
pub fn recovery_rate(truth: &[usize], est: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let t: HashSet<usize> = truth.iter().copied().collect();
    let e: HashSet<usize> = est.iter().copied().collect();
    t.intersection(&e).count() as f64 / t.len() as f64
}

/// `max_i ||M(I) w*_i - m_i||_2` with `W*` the nonnegative least-squares weights.
pub fn residual_check(inst: &SyntheticInstance, indices: &[usize]) -> Result<f64> {
    let w = weight_matrix(&inst.m, indices, DEFAULT_NNLS_TOL)?;
    let basis = inst.m.select_columns(indices);
    let res = basis * w - inst.m.to_dense();
    Ok(res.column_iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// A benchmarked pipeline: a selector on all of `M`, or ER followed by a
/// selector on the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Baseline(SelectorKind),
    Er(SelectorKind),
}

impl Algorithm {
    pub fn name(&self) -> String {
        match self {
            Algorithm::Baseline(k) => k.name().to_string(),
            Algorithm::Er(k) => format!("er_{}", k.name()),
        }
    }

    pub fn selector(&self) -> SelectorKind {
        match *self {
            Algorithm::Baseline(k) | Algorithm::Er(k) => k,
        }
    }

    /// ER with SPA and with every XRAY variant, then every baseline.
    pub fn all() -> Vec<Algorithm> {
        let mut v: Vec<Algorithm> = SelectorKind::ALL.iter().map(|&k| Algorithm::Er(k)).collect();
        v.extend(SelectorKind::ALL.iter().map(|&k| Algorithm::Baseline(k)));
        v
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    /// `spa`, `xray_greedy`, `er_spa`, `er-xray(max)` and similar.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        match t.strip_prefix("er").and_then(|rest| rest.strip_prefix(['_', '-', ' '])) {
            Some(rest) => Ok(Algorithm::Er(rest.parse()?)),
            None => Ok(Algorithm::Baseline(t.parse()?)),
        }
    }
}

impl Serialize for Algorithm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

/// Recovery levels reported as thresholds.
pub const LEVELS: [f64; 4] = [1.0, 0.9, 0.8, 0.7];

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub d: usize,
    pub m: usize,
    pub r: usize,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub mvee: CuttingPlaneConfig,
    /// Wall-clock timings make reports non-reproducible, so they are opt-in.
    pub record_timings: bool,
}

impl SweepConfig {
    /// d = 50, m = 1000, r = 10, noise 0 to 0.5 in steps of 0.05, 10 trials.
    pub fn desk_scale(master_seed: u64) -> Self {
        SweepConfig {
            d: 50,
            m: 1000,
            r: 10,
            grid: grid(0.0, 0.05, 0.5).expect("valid grid"),
            trials: 10,
            master_seed,
            algorithms: Algorithm::all(),
            mvee: CuttingPlaneConfig::default(),
            record_timings: false,
        }
    }

    /// d = 250, m = 5000, r = 10, noise 0 to 0.5 in steps of 0.01, 50 trials.
    pub fn full_scale(master_seed: u64) -> Self {
        SweepConfig {
            d: 250,
            m: 5000,
            grid: grid(0.0, 0.01, 0.5).expect("valid grid"),
            trials: 50,
            ..Self::desk_scale(master_seed)
        }
    }
}

/// `start, start + step, ...` up to `end`, including `end` when the last step
/// lands within `step / 2` of it. Values are rounded to 12 decimals.
pub fn grid(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::input(format!("bad grid {start}:{step}:{end}")));
    }
    let n = ((end - start) / step + 0.5 - 1e-9).floor() as usize;
    if n > 1_000_000 {
        return Err(Error::input("grid has too many points"));
    }
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub algorithm: Algorithm,
    /// Largest grid noise level whose mean recovery reaches each of
    /// [`LEVELS`]; `None` when no grid point does.
    pub max_delta: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    /// Mean recovery per grid point; failed runs count as 0.
    pub mean_recovery: Vec<f64>,
    pub failures: Vec<usize>,
    /// Grid positions where mean recovery rose above the previous point.
    pub non_monotone: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_seconds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub schema_version: &'static str,
    pub d: usize,
    pub m: usize,
    pub r: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub deltas: Vec<f64>,
    pub levels: Vec<f64>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub thresholds: Vec<Thresholds>,
    /// Mean number of active ellipsoid points per grid point, when any ER
    /// variant ran.
    pub er_active_points: Option<Vec<f64>>,
}

struct Cell {
    recovery: Vec<Option<f64>>,
    seconds: Vec<f64>,
    active: Option<usize>,
}

/// RNG for cell `(trial, grid_index)`: the master seed keys the generator,
/// the cell picks an independent stream.
pub fn cell_rng(master_seed: u64, trial: usize, grid_index: usize, grid_len: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trial * grid_len + grid_index) as u64);
    rng
}

fn run_cell(cfg: &SweepConfig, trial: usize, gi: usize) -> Result<Cell> {
    let mut rng = cell_rng(cfg.master_seed, trial, gi, cfg.grid.len());
    let xray_seed: u64 = rng.random();
    let inst = instance_from_rng(cfg.d, cfg.m, cfg.r, cfg.grid[gi], cfg.master_seed, &mut rng)?;
    let needs_er = cfg.algorithms.iter().any(|a| matches!(a, Algorithm::Er(_)));
    let t0 = Instant::now();
    let stage = if needs_er { Some(candidate_set(&inst.m, cfg.r, cfg.r, &cfg.mvee)) } else { None };
    let er_secs = t0.elapsed().as_secs_f64();
    let active = stage.as_ref().and_then(|s| s.as_ref().ok()).map(|s| s.candidates.len());

    let mut recovery = Vec::with_capacity(cfg.algorithms.len());
    let mut seconds = Vec::with_capacity(cfg.algorithms.len());
    for alg in &cfg.algorithms {
        let sel = SelectorConfig::new(alg.selector()).with_seed(xray_seed);
        let t = Instant::now();
        let got = match alg {
            Algorithm::Baseline(_) => sel.select(&inst.m, cfg.r),
            Algorithm::Er(_) => match stage.as_ref().expect("stage computed") {
                Ok(st) => select_from(&inst.m, st.clone(), cfg.r, Some(&sel)).map(|res| res.indices),
                Err(_) => Err(Error::Numerical("ellipsoid stage failed".into())),
            },
        };
        let extra = if matches!(alg, Algorithm::Er(_)) { er_secs } else { 0.0 };
        seconds.push(t.elapsed().as_secs_f64() + extra);
        recovery.push(got.ok().map(|idx| recovery_rate(&inst.true_indices, &idx)));
    }
    Ok(Cell { recovery, seconds, active })
}

/// Runs every algorithm on `trials` instances per grid point. Cells run in
/// parallel; each draws from its own seeded stream and results are reduced in
/// grid/trial order, so the report does not depend on the thread count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.trials == 0 {
        return Err(Error::input("trials must be at least 1"));
    }
    if cfg.grid.is_empty() || cfg.grid.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::input("noise grid must be nonempty with finite values >= 0"));
    }
    if cfg.algorithms.is_empty() {
        return Err(Error::input("no algorithms to benchmark"));
    }
    cfg.mvee.validate()?;
    let g = cfg.grid.len();
    let cells: Vec<Cell> = (0..g * cfg.trials)
        .into_par_iter()
        .map(|c| run_cell(cfg, c % cfg.trials, c / cfg.trials))
        .collect::<Result<_>>()?;

    let na = cfg.algorithms.len();
    let trials = cfg.trials as f64;
    let mut summaries = Vec::with_capacity(na);
    for (a, &alg) in cfg.algorithms.iter().enumerate() {
        let mut mean = vec![0.0; g];
        let mut failures = vec![0; g];
        let mut secs = vec![0.0; g];
        for gi in 0..g {
            let row = &cells[gi * cfg.trials..(gi + 1) * cfg.trials];
            let mut sum = 0.0;
            for cell in row {
                match cell.recovery[a] {
                    Some(v) => sum += v,
                    None => failures[gi] += 1,
                }
                secs[gi] += cell.seconds[a];
            }
            mean[gi] = sum / trials;
            secs[gi] /= trials;
        }
        let non_monotone = (1..g).filter(|&i| mean[i] > mean[i - 1] + 1e-12).collect();
        summaries.push(AlgorithmSummary {
            algorithm: alg,
            mean_recovery: mean,
            failures,
            non_monotone,
            mean_seconds: cfg.record_timings.then_some(secs),
        });
    }
    let thresholds = summaries
        .iter()
        .map(|s| Thresholds {
            algorithm: s.algorithm,
            max_delta: LEVELS.iter().map(|&lv| threshold(&cfg.grid, &s.mean_recovery, lv)).collect(),
        })
        .collect();
    let er_active_points = cfg.algorithms.iter().any(|a| matches!(a, Algorithm::Er(_))).then(|| {
        (0..g)
            .map(|gi| {
                let row = &cells[gi * cfg.trials..(gi + 1) * cfg.trials];
                row.iter().map(|c| c.active.unwrap_or(0) as f64).sum::<f64>() / trials
            })
            .collect()
    });
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        d: cfg.d,
        m: cfg.m,
        r: cfg.r,
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        deltas: cfg.grid.clone(),
        levels: LEVELS.to_vec(),
        algorithms: summaries,
        thresholds,
        er_active_points,
    })
}

/// Largest grid value whose mean recovery is at least `level`.
pub fn threshold(grid: &[f64], mean: &[f64], level: f64) -> Option<f64> {
    grid.iter().zip(mean).filter(|(_, &v)| v >= level - 1e-12).map(|(&x, _)| x).reduce(f64::max)
}

impl SweepReport {
    /// One row per algorithm, one column per recovery level; `-` where the
    /// level was never reached.
    pub fn thresholds_csv(&self) -> String {
        let mut out = String::from("algorithm");
        for lv in &self.levels {
            out.push_str(&format!(",{}%", (lv * 100.0).round()));
        }
        out.push('\n');
        for t in &self.thresholds {
            out.push_str(&t.algorithm.name());
            for v in &t.max_delta {
                match v {
                    Some(x) => out.push_str(&format!(",{x}")),
                    None => out.push_str(",-"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Mean recovery per algorithm (rows) and noise level (columns).
    pub fn recovery_csv(&self) -> String {
        let mut out = String::from("algorithm");
        for d in &self.deltas {
            out.push_str(&format!(",{d}"));
        }
        out.push('\n');
        for s in &self.algorithms {
            out.push_str(&s.algorithm.name());
            for v in &s.mean_recovery {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_rate_examples() {
        assert!((recovery_rate(&[1, 2, 3], &[1, 2, 4]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(recovery_rate(&[1, 2, 3], &[3, 2, 1]), 1.0);
        assert_eq!(recovery_rate(&[1, 2], &[3, 4]), 0.0);
    }

    #[test]
    fn grid_includes_end_within_half_step() {
        assert_eq!(grid(0.0, 0.05, 0.5).unwrap().len(), 11);
        assert_eq!(grid(0.0, 0.05, 0.5).unwrap()[3], 0.15);
        assert_eq!(grid(0.0, 0.01, 0.5).unwrap().len(), 51);
        assert_eq!(grid(0.0, 0.2, 0.5).unwrap(), vec![0.0, 0.2, 0.4]);
        assert_eq!(grid(0.0, 0.2, 0.51).unwrap(), vec![0.0, 0.2, 0.4, 0.6]);
        assert!(grid(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_instance_contains_basis() {
        let inst = gen_synthetic(8, 40, 3, 0.0, 5).unwrap();
        let m = inst.m.to_dense();
        for (c, &pos) in inst.true_indices.iter().enumerate() {
            assert_eq!(m.column(pos), inst.f.column(c));
        }
        for col in inst.k.column_iter() {
            assert!((col.sum() - 1.0).abs() <= 1e-12);
            assert!(col.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn assemble_is_bit_exact() {
        let inst = gen_synthetic(6, 30, 4, 0.1, 11).unwrap();
        let again = inst.assemble();
        let m = inst.m.to_dense();
        assert!(m.iter().zip(again.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn same_seed_same_instance() {
        let a = gen_synthetic(5, 20, 2, 0.05, 99).unwrap();
        let b = gen_synthetic(5, 20, 2, 0.05, 99).unwrap();
        assert_eq!(a.m, b.m);
        assert_eq!(a.perm, b.perm);
    }

    #[test]
    fn algorithm_names_parse() {
        for a in Algorithm::all() {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("ER-SPA".parse::<Algorithm>().unwrap(), Algorithm::Er(SelectorKind::Spa));
        assert_eq!(
            "er-xray(greedy)".parse::<Algorithm>().unwrap(),
            Algorithm::Er(SelectorKind::XrayGreedy)
        );
    }

    #[test]
    fn thresholds_pick_largest_qualifying_point() {
        let g = [0.0, 0.1, 0.2, 0.3];
        let mean = [1.0, 0.95, 0.85, 0.9];
        assert_eq!(threshold(&g, &mean, 1.0), Some(0.0));
        assert_eq!(threshold(&g, &mean, 0.9), Some(0.3));
        assert_eq!(threshold(&g, &[0.5; 4], 0.7), None);
    }
}
