//! GMM estimation of the intermediate-input elasticities `theta_i`, the
//! Armington elasticity `xi` and the household elasticity `nu`.
//!
//! Within a purchaser-year group the reduced form is
//! `dlog Omega_ij = beta1_i dlog P_j + beta2_i dlog Phi_ij + eta_it + e`
//! with `beta1 = 1 - theta` and `beta2 = (xi - theta) / (xi - 1)`. The group
//! intercept is removed by demeaning, and the moments are the residual times
//! each regressor, by purchaser. Moments are linear in the betas, so every
//! objective evaluation works from per-sector cross-products.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{HouseholdObservation, PanelObservation};
use crate::optimize::{powell_minimize, OptimizeError, PowellOptions};

/// Smallest admissible `xi - 1`.
pub const XI_MARGIN: f64 = 1e-3;
pub const XI_MAX: f64 = 50.0;

/// Starting points `(theta, xi)` for the multi-start search.
pub const STARTS: [(f64, f64); 5] = [(0.3, 1.5), (0.9, 1.5), (0.05, 1.5), (0.3, 3.0), (0.9, 3.0)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("xi = 1 makes the import-ratio coefficient singular")]
    UnitArmington,
    #[error("the panel has no observations")]
    EmptyPanel,
    #[error("sector {0} has no observations")]
    EmptySector(usize),
    #[error("observation refers to sector {index} but the panel has {n_sectors}")]
    SectorOutOfRange { index: usize, n_sectors: usize },
    #[error("expected {expected} parameters, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("moment Jacobian is rank deficient; no variation in {0}")]
    RankDeficient(String),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMode {
    /// One `theta` per purchaser plus a common `xi`; `2N` moments.
    SectorSpecific,
    /// One `theta` for every purchaser plus `xi`; the two pooled moments.
    Uniform,
    /// Ignores import ratios: one `theta` per purchaser from price moments.
    #[serde(alias = "biased")]
    BiasedClosed,
}

impl EstimationMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::SectorSpecific => "sector_specific",
            Self::Uniform => "uniform",
            Self::BiasedClosed => "biased_closed",
        }
    }
}

/// Panel after removing purchaser-year means.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualizedPanel {
    pub n_sectors: usize,
    pub observations: Vec<PanelObservation>,
    /// Group index of each observation, groups ordered by `(i, t)`.
    pub group: Vec<usize>,
    pub n_groups: usize,
}

impl ResidualizedPanel {
    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }
}

/// Demeans `dlog_omega`, `dlog_p` and `dlog_phi` within `(i, t)` groups.
pub fn residualize(
    observations: &[PanelObservation],
    n_sectors: usize,
) -> Result<ResidualizedPanel, EstimationError> {
    let mut groups: BTreeMap<(usize, i32), (usize, [f64; 3])> = BTreeMap::new();
    for o in observations {
        for index in [o.i, o.j] {
            if index >= n_sectors {
                return Err(EstimationError::SectorOutOfRange { index, n_sectors });
            }
        }
        let e = groups.entry((o.i, o.t)).or_insert((0, [0.0; 3]));
        e.0 += 1;
        e.1[0] += o.dlog_omega;
        e.1[1] += o.dlog_p;
        e.1[2] += o.dlog_phi;
    }
    let index: BTreeMap<(usize, i32), usize> = groups
        .keys()
        .enumerate()
        .map(|(k, key)| (*key, k))
        .collect();
    let mut group = Vec::with_capacity(observations.len());
    let residualized = observations
        .iter()
        .map(|o| {
            let (count, sums) = groups[&(o.i, o.t)];
            let c = count as f64;
            group.push(index[&(o.i, o.t)]);
            PanelObservation {
                dlog_omega: o.dlog_omega - sums[0] / c,
                dlog_p: o.dlog_p - sums[1] / c,
                dlog_phi: o.dlog_phi - sums[2] / c,
                ..*o
            }
        })
        .collect();
    Ok(ResidualizedPanel {
        n_sectors,
        observations: residualized,
        group,
        n_groups: groups.len(),
    })
}

/// `(1 - theta, (xi - theta) / (xi - 1))`.
pub fn structural_coefficients(theta: f64, xi: f64) -> Result<(f64, f64), EstimationError> {
    if xi == 1.0 {
        return Err(EstimationError::UnitArmington);
    }
    Ok((1.0 - theta, (xi - theta) / (xi - 1.0)))
}

/// Per-purchaser cross-products of `x = (dlog P, dlog Phi)` and `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SectorStats {
    n: usize,
    xx: Matrix2<f64>,
    xy: Vector2<f64>,
}

fn sector_stats(rp: &ResidualizedPanel) -> Vec<SectorStats> {
    let mut out = vec![
        SectorStats {
            n: 0,
            xx: Matrix2::zeros(),
            xy: Vector2::zeros(),
        };
        rp.n_sectors
    ];
    for o in &rp.observations {
        let x = Vector2::new(o.dlog_p, o.dlog_phi);
        let s = &mut out[o.i];
        s.n += 1;
        s.xx += x * x.transpose();
        s.xy += x * o.dlog_omega;
    }
    out
}

/// Sample moments by purchaser, `[price_0, phi_0, price_1, phi_1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentConditions {
    pub values: DVector<f64>,
    /// Purchasers without observations; their moments are zero by
    /// construction.
    pub empty_sectors: Vec<usize>,
}

/// Sample analogs of `E[x e]` for each purchaser, divided by the total
/// number of observations.
pub fn moment_conditions(
    theta: &DVector<f64>,
    xi: f64,
    rp: &ResidualizedPanel,
) -> Result<MomentConditions, EstimationError> {
    let n = rp.n_sectors;
    if theta.len() != n {
        return Err(EstimationError::ParameterCount {
            expected: n,
            found: theta.len(),
        });
    }
    if rp.observations.is_empty() {
        return Err(EstimationError::EmptyPanel);
    }
    let stats = sector_stats(rp);
    let n_obs = rp.n_obs() as f64;
    let mut values = DVector::zeros(2 * n);
    for (i, s) in stats.iter().enumerate() {
        let (b1, b2) = structural_coefficients(theta[i], xi)?;
        let g = (s.xy - s.xx * Vector2::new(b1, b2)) / n_obs;
        values[2 * i] = g[0];
        values[2 * i + 1] = g[1];
    }
    let empty_sectors = stats
        .iter()
        .enumerate()
        .filter(|(_, s)| s.n == 0)
        .map(|(i, _)| i)
        .collect();
    Ok(MomentConditions {
        values,
        empty_sectors,
    })
}

/// Sum of squared sector-specific moments.
pub fn gmm_objective(
    theta: &DVector<f64>,
    xi: f64,
    rp: &ResidualizedPanel,
) -> Result<f64, EstimationError> {
    Ok(moment_conditions(theta, xi, rp)?.values.norm_squared())
}

/// Moment system of one estimation mode, in terms of the optimizer's
/// parameter vector.
struct MomentSystem {
    mode: EstimationMode,
    stats: Vec<SectorStats>,
    n_obs: f64,
}

impl MomentSystem {
    fn n_params(&self) -> usize {
        let n = self.stats.len();
        match self.mode {
            EstimationMode::SectorSpecific => n + 1,
            EstimationMode::Uniform => 2,
            EstimationMode::BiasedClosed => n,
        }
    }

    fn n_moments(&self) -> usize {
        let n = self.stats.len();
        match self.mode {
            EstimationMode::SectorSpecific => 2 * n,
            EstimationMode::Uniform => 2,
            EstimationMode::BiasedClosed => n,
        }
    }

    /// `(theta_i, xi)` for purchaser `i`; `xi` is unused in biased mode.
    fn params_of(&self, x: &[f64], i: usize) -> (f64, f64) {
        match self.mode {
            EstimationMode::SectorSpecific => (x[i], x[self.stats.len()]),
            EstimationMode::Uniform => (x[0], x[1]),
            EstimationMode::BiasedClosed => (x[i], f64::NAN),
        }
    }

    /// Row offset and count of purchaser `i`'s moments.
    fn rows_of(&self, i: usize) -> (usize, usize) {
        match self.mode {
            EstimationMode::SectorSpecific => (2 * i, 2),
            EstimationMode::Uniform => (0, 2),
            EstimationMode::BiasedClosed => (i, 1),
        }
    }

    fn betas(&self, x: &[f64], i: usize) -> Vector2<f64> {
        let (theta, xi) = self.params_of(x, i);
        match self.mode {
            EstimationMode::BiasedClosed => Vector2::new(1.0 - theta, 0.0),
            _ => Vector2::new(1.0 - theta, (xi - theta) / (xi - 1.0)),
        }
    }

    fn moments(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.n_moments());
        for (i, s) in self.stats.iter().enumerate() {
            let gi = (s.xy - s.xx * self.betas(x, i)) / self.n_obs;
            let (row, k) = self.rows_of(i);
            for r in 0..k {
                g[row + r] += gi[r];
            }
        }
        g
    }

    /// Analytic `d g / d x`.
    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.stats.len();
        let mut jac = DMatrix::zeros(self.n_moments(), self.n_params());
        for (i, s) in self.stats.iter().enumerate() {
            let (theta, xi) = self.params_of(x, i);
            let (row, k) = self.rows_of(i);
            let xx = -s.xx / self.n_obs;
            let (theta_col, db_dtheta) = match self.mode {
                EstimationMode::BiasedClosed => (i, Vector2::new(-1.0, 0.0)),
                EstimationMode::SectorSpecific => (i, Vector2::new(-1.0, -1.0 / (xi - 1.0))),
                EstimationMode::Uniform => (0, Vector2::new(-1.0, -1.0 / (xi - 1.0))),
            };
            let dg = xx * db_dtheta;
            for r in 0..k {
                jac[(row + r, theta_col)] += dg[r];
            }
            if self.mode != EstimationMode::BiasedClosed {
                let xi_col = if self.mode == EstimationMode::Uniform {
                    1
                } else {
                    n
                };
                let dg = xx * Vector2::new(0.0, (theta - 1.0) / (xi - 1.0).powi(2));
                for r in 0..k {
                    jac[(row + r, xi_col)] += dg[r];
                }
            }
        }
        jac
    }

    /// `(1/N) sum_o h_o h_o'` of the per-observation moment contributions.
    fn moment_covariance(&self, x: &[f64], rp: &ResidualizedPanel) -> DMatrix<f64> {
        let m = self.n_moments();
        let mut omega = DMatrix::zeros(m, m);
        for o in &rp.observations {
            let b = self.betas(x, o.i);
            let xo = Vector2::new(o.dlog_p, o.dlog_phi);
            let e = o.dlog_omega - b.dot(&xo);
            let h = xo * e;
            let (row, k) = self.rows_of(o.i);
            for r in 0..k {
                for c in 0..k {
                    omega[(row + r, row + c)] += h[r] * h[c];
                }
            }
        }
        omega / self.n_obs
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let k = self.n_params();
        let mut lower = vec![0.0; k];
        let mut upper = vec![f64::INFINITY; k];
        if self.mode != EstimationMode::BiasedClosed {
            lower[k - 1] = 1.0 + XI_MARGIN;
            upper[k - 1] = XI_MAX;
        }
        (lower, upper)
    }

    fn start(&self, theta: f64, xi: f64) -> Vec<f64> {
        let mut x = vec![theta; self.n_params()];
        if self.mode != EstimationMode::BiasedClosed {
            *x.last_mut().expect("at least one parameter") = xi;
        }
        x
    }
}

/// Robust covariance of the parameters under identity weighting,
/// `(1/N) (G'G)^-1 G' Omega G (G'G)^-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichVariance {
    pub covariance: DMatrix<f64>,
    pub se: DVector<f64>,
}

fn sandwich(
    sys: &MomentSystem,
    x: &[f64],
    rp: &ResidualizedPanel,
) -> Result<SandwichVariance, EstimationError> {
    let g = sys.jacobian(x);
    let gtg = g.transpose() * &g;
    let inv = gtg
        .clone()
        .try_inverse()
        .filter(|inv| {
            // Reject numerically singular G'G as well as exactly singular.
            let cond = gtg.norm() * inv.norm();
            cond.is_finite() && cond < 1e14
        })
        .ok_or_else(|| EstimationError::RankDeficient(rank_deficiency_cause(sys)))?;
    let omega = sys.moment_covariance(x, rp);
    let bread = &inv * g.transpose();
    let cov = &bread * omega * bread.transpose() / sys.n_obs;
    let cov = (&cov + cov.transpose()) * 0.5;
    let se = cov.diagonal().map(|v| v.max(0.0).sqrt());
    Ok(SandwichVariance {
        covariance: cov,
        se,
    })
}

fn rank_deficiency_cause(sys: &MomentSystem) -> String {
    for (i, s) in sys.stats.iter().enumerate() {
        if s.xx[(0, 0)] == 0.0 {
            return format!("prices for purchaser {i}");
        }
    }
    if sys.mode != EstimationMode::BiasedClosed && sys.stats.iter().all(|s| s.xx[(1, 1)] == 0.0) {
        return "import ratios".to_string();
    }
    "the regressors".to_string()
}

/// Sandwich covariance of the sector-specific estimator at
/// `(theta, xi)`, parameters ordered `(theta_1..theta_N, xi)`.
pub fn sandwich_variance(
    theta: &DVector<f64>,
    xi: f64,
    rp: &ResidualizedPanel,
) -> Result<SandwichVariance, EstimationError> {
    if xi == 1.0 {
        return Err(EstimationError::UnitArmington);
    }
    let sys = system(EstimationMode::SectorSpecific, rp)?;
    let mut x: Vec<f64> = theta.iter().copied().collect();
    x.push(xi);
    sandwich(&sys, &x, rp)
}

fn system(mode: EstimationMode, rp: &ResidualizedPanel) -> Result<MomentSystem, EstimationError> {
    if rp.observations.is_empty() {
        return Err(EstimationError::EmptyPanel);
    }
    Ok(MomentSystem {
        mode,
        stats: sector_stats(rp),
        n_obs: rp.n_obs() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub mode: EstimationMode,
    /// One entry per purchaser; repeated in uniform mode.
    pub theta_hat: Vec<f64>,
    /// Absent in biased mode, which does not identify `xi`.
    pub xi_hat: Option<f64>,
    pub se_theta: Option<Vec<f64>>,
    pub se_xi: Option<f64>,
    pub objective_value: f64,
    pub n_obs: usize,
    pub converged: bool,
    /// Sandwich covariance could not be formed.
    pub singular_variance: bool,
    /// Purchasers whose `theta` sits on the zero bound.
    pub theta_at_bound: Vec<bool>,
    pub xi_at_bound: bool,
    /// Index into [`STARTS`] of the winning start.
    pub start_index: usize,
    pub n_evals: usize,
}

/// Multi-start Powell minimization of the identity-weighted GMM objective.
pub fn estimate(
    rp: &ResidualizedPanel,
    mode: EstimationMode,
) -> Result<EstimationResult, EstimationError> {
    estimate_with(rp, mode, &PowellOptions::default())
}

pub fn estimate_with(
    rp: &ResidualizedPanel,
    mode: EstimationMode,
    opts: &PowellOptions,
) -> Result<EstimationResult, EstimationError> {
    let sys = system(mode, rp)?;
    if mode != EstimationMode::Uniform {
        if let Some(i) = sys.stats.iter().position(|s| s.n == 0) {
            return Err(EstimationError::EmptySector(i));
        }
    }
    let (lower, upper) = sys.bounds();
    let objective = |x: &[f64]| sys.moments(x).norm_squared();
    let runs = STARTS
        .par_iter()
        .enumerate()
        .map(|(k, &(theta, xi))| {
            powell_minimize(objective, &sys.start(theta, xi), &lower, &upper, opts).map(|r| (k, r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (start_index, best) = runs
        .into_iter()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .expect("at least one start");
    let total_evals = best.n_evals;
    let x = best.x;

    let variance = sandwich(&sys, &x, rp);
    if let Err(e) = &variance {
        log::warn!("{} estimate: {e}; standard errors unavailable", mode.name());
    }
    let se = variance.ok().map(|v| v.se);
    let n = rp.n_sectors;
    let theta_hat: Vec<f64> = (0..n).map(|i| sys.params_of(&x, i).0).collect();
    let (xi_hat, se_xi, se_theta) = match mode {
        EstimationMode::SectorSpecific => (
            Some(x[n]),
            se.as_ref().map(|s| s[n]),
            se.as_ref().map(|s| s.rows(0, n).iter().copied().collect()),
        ),
        EstimationMode::Uniform => (
            Some(x[1]),
            se.as_ref().map(|s| s[1]),
            se.as_ref().map(|s| vec![s[0]; n]),
        ),
        EstimationMode::BiasedClosed => {
            (None, None, se.as_ref().map(|s| s.iter().copied().collect()))
        }
    };
    let xi_at_bound = xi_hat.is_some_and(|xi| xi <= 1.0 + XI_MARGIN || xi >= XI_MAX);
    Ok(EstimationResult {
        mode,
        theta_at_bound: theta_hat.iter().map(|t| *t <= 0.0).collect(),
        theta_hat,
        xi_hat,
        se_theta,
        se_xi,
        objective_value: best.f,
        n_obs: rp.n_obs(),
        converged: best.converged,
        singular_variance: se.is_none(),
        xi_at_bound,
        start_index,
        n_evals: total_evals,
    })
}

/// Household elasticity estimate from budget-share changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdEstimate {
    pub nu_hat: f64,
    pub se: Option<f64>,
    pub objective_value: f64,
    pub n_obs: usize,
    pub converged: bool,
    /// Budget shares never move, so `nu = 1` is imposed rather than
    /// identified.
    pub degenerate: bool,
}

/// `dlog a0_j = (1 - nu) dlog P_j + year effect`, one price moment.
pub fn estimate_household_nu(
    observations: &[HouseholdObservation],
) -> Result<HouseholdEstimate, EstimationError> {
    if observations.is_empty() {
        return Err(EstimationError::EmptyPanel);
    }
    // The household is a single purchaser, so year effects play the role of
    // purchaser-year effects.
    let n_goods = observations.iter().map(|o| o.j).max().unwrap_or(0) + 1;
    let panel: Vec<PanelObservation> = observations
        .iter()
        .map(|o| PanelObservation {
            i: 0,
            j: o.j,
            t: o.t,
            dlog_omega: o.dlog_share,
            dlog_p: o.dlog_p,
            dlog_phi: 0.0,
        })
        .collect();
    let rp = residualize(&panel, n_goods)?;
    let stats = sector_stats(&rp);
    let raw_ss: f64 = observations.iter().map(|o| o.dlog_p * o.dlog_p).sum();
    if stats[0].xx[(0, 0)] <= 1e-20 * raw_ss {
        return Err(EstimationError::RankDeficient("household prices".into()));
    }
    if rp.observations.iter().all(|o| o.dlog_omega.abs() < 1e-15) {
        log::warn!("household budget shares do not vary; nu = 1 imposed");
        return Ok(HouseholdEstimate {
            nu_hat: 1.0,
            se: None,
            objective_value: 0.0,
            n_obs: rp.n_obs(),
            converged: true,
            degenerate: true,
        });
    }
    let sys = MomentSystem {
        mode: EstimationMode::BiasedClosed,
        stats: vec![stats[0]],
        n_obs: rp.n_obs() as f64,
    };
    let opts = PowellOptions::default();
    let runs = STARTS
        .iter()
        .map(|&(nu, _)| {
            powell_minimize(
                |x: &[f64]| sys.moments(x).norm_squared(),
                &[nu],
                &[0.0],
                &[f64::INFINITY],
                &opts,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let best = runs
        .into_iter()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("at least one start");
    let se = sandwich(&sys, &best.x, &rp).ok().map(|v| v.se[0]);
    Ok(HouseholdEstimate {
        nu_hat: best.x[0],
        se,
        objective_value: best.f,
        n_obs: rp.n_obs(),
        converged: best.converged,
        degenerate: false,
    })
}

/// Writes one row per sector with the main and import-ignoring estimates,
/// then `uniform` and `armington` rows.
pub fn write_estimates_csv<W: Write>(
    codes: &[String],
    main: &EstimationResult,
    biased: Option<&EstimationResult>,
    uniform: Option<&EstimationResult>,
    out: W,
) -> csv::Result<()> {
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let at = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map(|s| s[i]);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["code", "estimate", "se", "biased_estimate", "biased_se"])?;
    for (i, code) in codes.iter().enumerate() {
        w.write_record([
            code.clone(),
            fmt(Some(main.theta_hat[i])),
            fmt(at(&main.se_theta, i)),
            fmt(biased.map(|b| b.theta_hat[i])),
            fmt(biased.and_then(|b| at(&b.se_theta, i))),
        ])?;
    }
    if let Some(u) = uniform {
        w.write_record([
            "uniform".to_string(),
            fmt(Some(u.theta_hat[0])),
            fmt(at(&u.se_theta, 0)),
            String::new(),
            String::new(),
        ])?;
    }
    w.write_record([
        "armington".to_string(),
        fmt(main.xi_hat),
        fmt(main.se_xi),
        String::new(),
        String::new(),
    ])?;
    w.flush()?;
    Ok(())
}
