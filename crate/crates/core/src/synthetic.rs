//! Synthetic economies and estimation panels with known parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analytics::reduced_form_check;
use crate::economy::{CoreError, Economy, Elasticities, IOSnapshot};
use crate::equilibrium::{calibrate, solve_equilibrium, CalibratedModel, EquilibriumError, Shock};
use crate::ingest::PanelObservation;

/// Shape of a random economy.
#[derive(Debug, Clone, PartialEq)]
pub struct EconomySpec {
    pub n: usize,
    /// Sectors `0..n_tradeable` are imported.
    pub n_tradeable: usize,
    /// Mean imported fraction of spending on tradeable inputs.
    pub import_share: f64,
    pub labor_share: (f64, f64),
}

impl EconomySpec {
    pub fn closed(n: usize) -> Self {
        Self {
            n,
            n_tradeable: 0,
            import_share: 0.0,
            labor_share: (0.35, 0.65),
        }
    }

    pub fn open(n: usize, n_tradeable: usize) -> Self {
        Self {
            n,
            n_tradeable,
            import_share: 0.3,
            labor_share: (0.35, 0.65),
        }
    }
}

fn normalized<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    let v = DVector::from_fn(n, |_, _| rng.random_range(0.2..1.0));
    let s = v.sum();
    v / s
}

/// A random snapshot whose every sector buys from every other, with sales
/// shares and exports consistent with base-year market clearing.
pub fn random_snapshot<R: Rng>(rng: &mut R, spec: &EconomySpec) -> IOSnapshot {
    let n = spec.n;
    let mut omega = DMatrix::zeros(n, n);
    for i in 0..n {
        omega.set_row(i, &normalized(rng, n).transpose());
    }
    let phi = DMatrix::from_fn(n, n, |_, j| {
        if j < spec.n_tradeable {
            1.0 - spec.import_share * rng.random_range(0.5..1.5)
        } else {
            1.0
        }
    });
    let (lo, hi) = spec.labor_share;
    let gamma = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
    let a0 = normalized(rng, n);
    consistent_snapshot(0, omega, phi, gamma, a0).expect("random snapshot is valid")
}

/// Completes primitive shares with base-year sales shares and exports.
pub fn consistent_snapshot(
    year: i32,
    omega: DMatrix<f64>,
    phi: DMatrix<f64>,
    gamma: DVector<f64>,
    a0: DVector<f64>,
) -> Result<IOSnapshot, CoreError> {
    let n = omega.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| (1.0 - gamma[i]) * omega[(i, j)]);
    let y = (DMatrix::identity(n, n) - m.transpose())
        .lu()
        .solve(&a0)
        .ok_or(CoreError::NotInvertible { upper: f64::NAN })?;
    let nx = DVector::from_fn(n, |j, _| {
        (0..n)
            .map(|i| (1.0 - gamma[i]) * omega[(i, j)] * (1.0 - phi[(i, j)]) * y[i])
            .sum::<f64>()
    });
    IOSnapshot::from_shares(year, omega, phi, gamma, a0, y, nx)
}

/// Economy with codes `S0`, `S1`, ... and the first `n_tradeable` tradeable.
pub fn synthetic_economy(n: usize, n_tradeable: usize) -> Economy {
    let codes: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
    let labels = codes.iter().map(|c| format!("Sector {c}")).collect();
    Economy::new(codes, labels, (0..n).map(|i| i < n_tradeable).collect())
        .expect("synthetic codes are unique")
}

/// Calibrated random economy; the seed fixes every share.
pub fn random_model(
    seed: u64,
    spec: &EconomySpec,
    elasticities: &Elasticities,
    open_economy: bool,
) -> Result<CalibratedModel, EquilibriumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let snapshot = random_snapshot(&mut rng, spec);
    calibrate(
        &synthetic_economy(spec.n, spec.n_tradeable),
        &snapshot,
        elasticities,
        open_economy,
    )
}

/// Settings for [`reduced_form_panel`].
#[derive(Debug, Clone, PartialEq)]
pub struct PanelSpec {
    pub years: usize,
    pub price_sd: f64,
    pub phi_sd: f64,
    pub noise_sd: f64,
    pub first_year: i32,
}

impl Default for PanelSpec {
    fn default() -> Self {
        Self {
            years: 25,
            price_sd: 0.05,
            phi_sd: 0.05,
            noise_sd: 0.01,
            first_year: 1998,
        }
    }
}

/// Estimation panel whose share changes follow the reduced form exactly,
/// plus iid normal noise.
///
/// Each year draws supplier price changes and import-ratio changes, the
/// latter common across purchasers; `reduced_form_check` evaluated at the
/// model's base state turns them into share changes.
pub fn reduced_form_panel(
    model: &CalibratedModel,
    spec: &PanelSpec,
    seed: u64,
) -> Result<Vec<PanelObservation>, EquilibriumError> {
    let n = model.n_sectors();
    let base = solve_equilibrium(model, &Shock::base(n))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let price = Normal::new(0.0, spec.price_sd).expect("finite sd");
    let phi = Normal::new(0.0, spec.phi_sd).expect("finite sd");
    let noise = Normal::new(0.0, spec.noise_sd.max(0.0)).expect("finite sd");
    let mut out = Vec::with_capacity(n * n * spec.years.saturating_sub(1));
    for t in 1..spec.years {
        let dlog_p = DVector::from_fn(n, |_, _| price.sample(&mut rng));
        let dlog_phi_j = DVector::from_fn(n, |_, _| phi.sample(&mut rng));
        let dlog_phi = DMatrix::from_fn(n, n, |_, j| dlog_phi_j[j]);
        let predicted = reduced_form_check(model, &base, &dlog_p, &dlog_phi)
            .map_err(|e| EquilibriumError::InvalidSnapshot(e.to_string()))?;
        for i in 0..n {
            for j in 0..n {
                let eps = if spec.noise_sd > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                out.push(PanelObservation {
                    i,
                    j,
                    t: spec.first_year + t as i32,
                    dlog_omega: predicted[(i, j)] + eps,
                    dlog_p: dlog_p[j],
                    dlog_phi: dlog_phi_j[j],
                });
            }
        }
    }
    Ok(out)
}
