//! Ellipsoidal rounding.
//!
//! Reduce `M` to its leading `rho` right singular directions, compute the
//! origin-centered minimum-volume ellipsoid enclosing `{±p_i}`, and take the
//! points on its boundary as candidates for the basis columns. The exact
//! variant requires exactly `r` boundary points; the practical variant grows
//! `rho` until at least `r` appear and then lets a selector choose `r` of
//! them.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::baselines::{SelectorConfig, SelectorKind};
use crate::error::{Error, Result};
use crate::matrix::{rank_threshold, truncated_svd, DataMatrix, SvdFactors};
use crate::mvee::{solve_q_cutting_plane, CuttingPlaneConfig, KktReport, MveeSolution};
use crate::SCHEMA_VERSION;

/// Output of an ER run. Indices are 0-based in memory and 1-based when
/// serialized.
#[derive(Debug, Clone)]
pub struct ErResult {
    /// Selected columns, ascending.
    pub indices: Vec<usize>,
    /// Active points of the ellipsoid, ascending.
    pub candidate_set: Vec<usize>,
    pub rho_used: usize,
    pub mvee: MveeSolution,
    /// `None` when the candidate set already had `r` elements.
    pub selector_used: Option<SelectorKind>,
    /// `sigma_{rho+1}(M)`
    pub discarded_energy: f64,
}

#[derive(Serialize)]
struct ErJson<'a> {
    schema_version: &'a str,
    indices: Vec<usize>,
    candidate_set: Vec<usize>,
    rho_used: usize,
    selector_used: &'a str,
    diagnostics: ErDiagnostics,
}

#[derive(Serialize)]
struct ErDiagnostics {
    active_points: usize,
    discarded_energy: f64,
    mvee_objective: f64,
    inner_iterations: usize,
    outer_iterations: usize,
    kkt: KktReport,
}

impl Serialize for ErResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ErJson {
            schema_version: SCHEMA_VERSION,
            indices: self.indices.iter().map(|i| i + 1).collect(),
            candidate_set: self.candidate_set.iter().map(|i| i + 1).collect(),
            rho_used: self.rho_used,
            selector_used: self.selector_used.map_or("none", SelectorKind::name),
            diagnostics: ErDiagnostics {
                active_points: self.candidate_set.len(),
                discarded_energy: self.discarded_energy,
                mvee_objective: self.mvee.objective,
                inner_iterations: self.mvee.inner_iterations,
                outer_iterations: self.mvee.trace.len(),
                kkt: self.mvee.kkt,
            },
        }
        .serialize(s)
    }
}

/// Quantities bounding how much noise ER tolerates on an instance
/// `M = F (I, K) Pi + N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceDiagnostics {
    /// Smallest singular value of `F`.
    pub sigma: f64,
    pub mu: f64,
    /// `sigma (1 - mu) / 4`
    pub epsilon: f64,
    /// `||N||_2`, when a noise matrix was supplied.
    pub noise_norm: Option<f64>,
}

impl InstanceDiagnostics {
    pub fn with_noise(mut self, noise: &DMatrix<f64>) -> Result<Self> {
        self.noise_norm = Some(spectral_norm(noise)?);
        Ok(self)
    }
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() || a.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let f = crate::matrix::svd(&DataMatrix::dense(a.clone())?)?;
    Ok(f.singular_values[0])
}

/// Largest column 2-norm of `K`.
pub fn mu(k: &DMatrix<f64>) -> f64 {
    k.column_iter().map(|c| c.norm()).fold(0.0, f64::max)
}

pub fn epsilon_bound(f: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<InstanceDiagnostics> {
    let (d, r) = f.shape();
    if r == 0 || r > d {
        return Err(Error::Assumption(format!("basis matrix {d}x{r} cannot have full column rank")));
    }
    if k.nrows() != r && k.ncols() > 0 {
        return Err(Error::input(format!("weight matrix has {} rows, basis has {r} columns", k.nrows())));
    }
    let fac = crate::matrix::svd(&DataMatrix::dense(f.clone())?)?;
    let sigma = fac.singular_values[r - 1];
    if sigma <= rank_threshold(d, r, fac.singular_values[0]) {
        return Err(Error::Assumption("basis matrix is not of full column rank".into()));
    }
    let mu = mu(k);
    Ok(InstanceDiagnostics { sigma, mu, epsilon: sigma * (1.0 - mu) / 4.0, noise_norm: None })
}

/// Result of the ellipsoid stage alone.
#[derive(Debug, Clone)]
pub struct CandidateStage {
    pub candidates: Vec<usize>,
    pub rho_used: usize,
    pub mvee: MveeSolution,
    pub discarded_energy: f64,
}

/// Singular factors computed lazily, widened on demand.
struct Spectrum<'a> {
    m: &'a DataMatrix,
    factors: SvdFactors,
}

impl<'a> Spectrum<'a> {
    fn new(m: &'a DataMatrix, k: usize) -> Result<Self> {
        let t = m.nrows().min(m.ncols());
        Ok(Spectrum { m, factors: truncated_svd(m, k.min(t))? })
    }

    /// Makes sure `k` leading triplets are available.
    fn ensure(&mut self, k: usize) -> Result<()> {
        let t = self.m.nrows().min(self.m.ncols());
        let k = k.min(t);
        if self.factors.singular_values.len() < k {
            self.factors = truncated_svd(self.m, (2 * k).min(t))?;
        }
        Ok(())
    }

    /// Numerical rank among the computed triplets, after widening to `need + 1`.
    fn rank_at_least(&mut self, need: usize) -> Result<usize> {
        self.ensure(need + 1)?;
        Ok(self.factors.numerical_rank())
    }
}

fn check_r(spectrum: &mut Spectrum<'_>, r: usize) -> Result<usize> {
    if r == 0 {
        return Err(Error::input("r must be at least 1"));
    }
    let t = spectrum.m.nrows().min(spectrum.m.ncols());
    if r > t {
        return Err(Error::input(format!("r = {r} exceeds min(d, m) = {t}")));
    }
    let rank = spectrum.rank_at_least(r)?;
    if r > rank {
        return Err(Error::Assumption(format!("r = {r} exceeds the numerical rank {rank} of M")));
    }
    Ok(rank)
}

fn stage_at(spectrum: &mut Spectrum<'_>, rho: usize, cfg: &CuttingPlaneConfig) -> Result<CandidateStage> {
    spectrum.ensure(rho + 1)?;
    let emb = spectrum.factors.reduce(rho)?;
    let mvee = solve_q_cutting_plane(&emb.p, cfg)?;
    Ok(CandidateStage {
        candidates: mvee.active_indices.clone(),
        rho_used: rho,
        mvee,
        discarded_energy: emb.discarded_energy,
    })
}

pub fn er_exact(m: &DataMatrix, r: usize) -> Result<ErResult> {
    er_exact_with(m, r, &CuttingPlaneConfig::default())
}

/// Active points of the ellipsoid at `rho = r`; fails unless there are exactly `r`.
pub fn er_exact_with(m: &DataMatrix, r: usize, cfg: &CuttingPlaneConfig) -> Result<ErResult> {
    let mut spectrum = Spectrum::new(m, r + 1)?;
    check_r(&mut spectrum, r)?;
    let st = stage_at(&mut spectrum, r, cfg)?;
    if st.candidates.len() != r {
        return Err(Error::AmbiguousActiveSet { candidates: st.candidates, expected: r });
    }
    Ok(ErResult {
        indices: st.candidates.clone(),
        candidate_set: st.candidates,
        rho_used: r,
        mvee: st.mvee,
        selector_used: None,
        discarded_energy: st.discarded_energy,
    })
}

/// Ellipsoid stage with escalation: starting at `rho0`, raise `rho` by one
/// until at least `r` points are active.
pub fn candidate_set(
    m: &DataMatrix,
    r: usize,
    rho0: usize,
    cfg: &CuttingPlaneConfig,
) -> Result<CandidateStage> {
    if rho0 == 0 {
        return Err(Error::input("rho0 must be at least 1"));
    }
    let mut spectrum = Spectrum::new(m, rho0.max(r) + 1)?;
    let rank = check_r(&mut spectrum, r)?;
    let mut rho = rho0.min(rank.max(r));
    loop {
        let st = stage_at(&mut spectrum, rho, cfg)?;
        if st.candidates.len() >= r {
            return Ok(st);
        }
        spectrum.ensure(rho + 2)?;
        let rank = spectrum.factors.numerical_rank();
        if rho >= rank {
            return Err(Error::Assumption(format!(
                "only {} active points at the full numerical rank {rank}, need {r}",
                st.candidates.len()
            )));
        }
        rho += 1;
    }
}

/// Picks `r` of the candidates. With exactly `r` candidates no selector runs;
/// otherwise `selector` is applied to `M(J)`.
pub fn select_from(
    m: &DataMatrix,
    stage: CandidateStage,
    r: usize,
    selector: Option<&SelectorConfig>,
) -> Result<ErResult> {
    let j = &stage.candidates;
    let (indices, used) = if j.len() == r {
        (j.clone(), None)
    } else {
        let sel = selector.ok_or_else(|| Error::AmbiguousActiveSet {
            candidates: j.clone(),
            expected: r,
        })?;
        let sub = m.subset_columns(j);
        let local = sel.select(&sub, r)?;
        let mut out: Vec<usize> = local.iter().map(|&k| j[k]).collect();
        out.sort_unstable();
        out.dedup();
        if out.len() != r {
            return Err(Error::Numerical(format!("selector {} returned duplicate indices", sel.algorithm)));
        }
        (out, Some(sel.algorithm))
    };
    Ok(ErResult {
        indices,
        candidate_set: stage.candidates,
        rho_used: stage.rho_used,
        mvee: stage.mvee,
        selector_used: used,
        discarded_energy: stage.discarded_energy,
    })
}

pub fn er_practical(
    m: &DataMatrix,
    r: usize,
    rho0: usize,
    selector: &SelectorConfig,
) -> Result<ErResult> {
    er_practical_with(m, r, rho0, selector, &CuttingPlaneConfig::default())
}

pub fn er_practical_with(
    m: &DataMatrix,
    r: usize,
    rho0: usize,
    selector: &SelectorConfig,
    cfg: &CuttingPlaneConfig,
) -> Result<ErResult> {
    let stage = candidate_set(m, r, rho0, cfg)?;
    select_from(m, stage, r, Some(selector))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_examples() {
        let e = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(mu(&e), 1.0);
        let half = DMatrix::from_column_slice(2, 1, &[0.5, 0.5]);
        assert!((mu(&half) - 0.5f64.sqrt()).abs() < 1e-15);
        let k = DMatrix::from_column_slice(3, 2, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.2, 0.8, 0.0]);
        assert!((mu(&k) - 0.68f64.sqrt()).abs() < 1e-15);
        assert_eq!(mu(&DMatrix::zeros(3, 0)), 0.0);
    }

    #[test]
    fn epsilon_for_scaled_identity() {
        let f = DMatrix::identity(3, 3) * 4.0;
        // a column with norm 0.5
        let k = DMatrix::from_column_slice(3, 1, &[0.5, 0.0, 0.0]);
        let diag = epsilon_bound(&f, &k).unwrap();
        assert!((diag.epsilon - 0.5).abs() < 1e-12);
        let vertex = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
        assert_eq!(epsilon_bound(&f, &vertex).unwrap().epsilon, 0.0);
    }

    #[test]
    fn rank_deficient_basis_is_rejected() {
        let f = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let k = DMatrix::from_column_slice(2, 1, &[0.5, 0.5]);
        assert!(matches!(epsilon_bound(&f, &k), Err(Error::Assumption(_))));
    }

    #[test]
    fn identity_basis_recovered_under_permutation() {
        // columns: interior, e2, interior, e1, e3, interior
        let m = DMatrix::from_column_slice(3, 6, &[
            0.2, 0.3, 0.5, 0.0, 1.0, 0.0, 0.6, 0.2, 0.2, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.1, 0.1,
            0.8,
        ]);
        let res = er_exact(&DataMatrix::dense(m).unwrap(), 3).unwrap();
        assert_eq!(res.indices, vec![1, 3, 4]);
    }

    #[test]
    fn r_above_rank_is_an_assumption_error() {
        let m = DMatrix::from_column_slice(3, 4, &[
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.5, 0.0, 0.2, 0.8, 0.0,
        ]);
        let sel = SelectorConfig::new(SelectorKind::Spa);
        let err = er_practical(&DataMatrix::dense(m).unwrap(), 3, 3, &sel).unwrap_err();
        assert!(matches!(err, Error::Assumption(_)), "{err}");
    }

    #[test]
    fn serialization_is_one_based() {
        let m = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.5, 0.5, 0.0, 1.0]);
        let res = er_exact(&DataMatrix::dense(m).unwrap(), 2).unwrap();
        let v = serde_json::to_value(&res).unwrap();
        assert_eq!(v["indices"], serde_json::json!([1, 3]));
        assert_eq!(v["selector_used"], "none");
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
    }
}
