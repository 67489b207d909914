//! Counterfactual experiments run side by side under several elasticity
//! calibrations: one-at-a-time import-price shocks, one-at-a-time severe
//! productivity shocks, and Monte Carlo sectoral business cycles.
//!
//! Every calibration sees exactly the same shock inputs. Scenarios run in
//! parallel on the ambient rayon pool; results are collected in scenario
//! order, so reports do not depend on the number of workers.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::Elasticities;
use crate::equilibrium::{solve_equilibrium, CalibratedModel, EquilibriumError, Shock};
use crate::ingest::clip_to_psd;

/// Relative tolerance on negative eigenvalues accepted as rounding noise.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ShockError {
    #[error("covariance is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("covariance is {rows}x{cols}; expected {expected}x{expected}")]
    Dimension {
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("no calibrations given")]
    NoModels,
    #[error("calibrations disagree on the sector list")]
    MismatchedModels,
    #[error("import-price experiments need open-economy calibrations; {0} is closed")]
    ClosedEconomy(String),
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
}

/// A calibrated model with the label used in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedModel {
    pub name: String,
    pub model: CalibratedModel,
}

/// The three standard calibrations of one economy: estimated
/// sector-specific `theta`, a common `theta`, and `theta = 1` everywhere.
/// `sigma`, `xi` and `nu` are taken from `base`.
pub fn calibration_variants(
    base: &CalibratedModel,
    theta_main: &[f64],
    theta_uniform: f64,
) -> Result<Vec<NamedModel>, EquilibriumError> {
    let n = base.n_sectors();
    let el = &base.elasticities;
    let with_theta = |theta: Vec<f64>| {
        let mut e = Elasticities::new(el.sigma, theta, el.xi, el.nu);
        e.xi_export = el.xi_export;
        base.with_elasticities(e)
    };
    Ok(vec![
        NamedModel {
            name: "main".into(),
            model: with_theta(theta_main.to_vec())?,
        },
        NamedModel {
            name: "uniform".into(),
            model: with_theta(vec![theta_uniform; n])?,
        },
        NamedModel {
            name: "cobb_douglas".into(),
            model: with_theta(vec![1.0; n])?,
        },
    ])
}

/// Clips negative eigenvalues to zero and symmetrizes.
pub fn repair_psd(cov: &DMatrix<f64>) -> DMatrix<f64> {
    clip_to_psd(cov)
}

/// Lower-triangular `L` with `L L' = cov`, allowing zero pivots for
/// semidefinite input.
fn psd_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, ShockError> {
    let n = cov.nrows();
    let scale = cov.diagonal().amax().max(f64::MIN_POSITIVE);
    let tol = PSD_TOL * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = cov[(j, j)] - (0..j).map(|k| l[(j, k)].powi(2)).sum::<f64>();
        if d < -tol {
            return Err(ShockError::NotPsd(d));
        }
        if d <= tol {
            // Zero pivot: the rest of the column must vanish too.
            for i in j + 1..n {
                let r = cov[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                if r.abs() > tol.sqrt() * scale.sqrt() {
                    return Err(ShockError::NotPsd(d));
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let r = cov[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = r / ljj;
        }
    }
    Ok(l)
}

/// Generator for draw `index`: seeded from `seed`, one stream per draw.
fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `n` mean-zero normal vectors with covariance `cov`.
pub fn mvn_sample(
    cov: &DMatrix<f64>,
    n: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>, ShockError> {
    if !cov.is_square() {
        return Err(ShockError::Dimension {
            rows: cov.nrows(),
            cols: cov.ncols(),
            expected: cov.nrows(),
        });
    }
    let l = psd_factor(cov)?;
    let dim = cov.nrows();
    Ok((0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = draw_rng(seed, k as u64);
            let e = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            &l * e
        })
        .collect())
}

/// Runs `f` on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(
    workers: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, ShockError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ShockError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Mean, sample standard deviation and standardized third moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                skewness: f64::NAN,
                n,
            };
        }
        let nf = n as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
        let sd = if n > 1 {
            (m2 * nf / (nf - 1.0)).sqrt()
        } else {
            0.0
        };
        let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        Self {
            mean,
            sd,
            skewness,
            n,
        }
    }
}

/// Equal-width histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Histogram {
            edges: vec![],
            counts: vec![],
        };
    }
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges, counts }
}

/// A scenario that did not solve under some calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFailure {
    pub scenario: String,
    pub calibration: String,
    pub error: String,
}

fn check_models(models: &[NamedModel]) -> Result<usize, ShockError> {
    let first = models.first().ok_or(ShockError::NoModels)?;
    let codes = first.model.economy.codes();
    if models.iter().any(|m| m.model.economy.codes() != codes) {
        return Err(ShockError::MismatchedModels);
    }
    Ok(codes.len())
}

fn names(models: &[NamedModel]) -> Vec<String> {
    models.iter().map(|m| m.name.clone()).collect()
}

/// Prices and log GDP change under one calibration.
type Outcome = (DVector<f64>, f64);

/// Solves `shock` under every calibration; the first failure is returned
/// with the calibration's name.
fn solve_all(models: &[NamedModel], shock: &Shock) -> Result<Vec<Outcome>, (String, String)> {
    models
        .iter()
        .map(|m| {
            solve_equilibrium(&m.model, shock)
                .map(|s| (s.p, s.gdp))
                .map_err(|e| (m.name.clone(), e.to_string()))
        })
        .collect()
}

/// One responding sector's price change under each calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResponseRow {
    pub shocked: String,
    pub sector: String,
    /// Rank among responders to this shock under the first calibration.
    pub rank: usize,
    /// `P / P_base - 1`, one entry per calibration.
    pub responses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForeignPriceReport {
    pub magnitude: f64,
    pub top_k: usize,
    pub calibrations: Vec<String>,
    pub rows: Vec<PriceResponseRow>,
    pub failures: Vec<ScenarioFailure>,
}

impl ForeignPriceReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["shocked".to_string(), "sector".into(), "rank".into()];
        header.extend(self.calibrations.iter().cloned());
        header.extend(
            self.calibrations
                .iter()
                .skip(1)
                .map(|c| format!("{}_minus_{c}", self.calibrations[0])),
        );
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.shocked.clone(), r.sector.clone(), r.rank.to_string()];
            rec.extend(r.responses.iter().map(|v| format!("{v:.9}")));
            rec.extend(
                r.responses
                    .iter()
                    .skip(1)
                    .map(|v| format!("{:.9}", r.responses[0] - v)),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Raises each tradeable sector's foreign import price by `magnitude`, one
/// at a time, and records the `top_k` largest domestic price responses
/// under the first calibration alongside the others.
pub fn foreign_price_experiment(
    models: &[NamedModel],
    magnitude: f64,
    top_k: usize,
) -> Result<ForeignPriceReport, ShockError> {
    let n = check_models(models)?;
    if let Some(m) = models.iter().find(|m| !m.model.open_economy) {
        return Err(ShockError::ClosedEconomy(m.name.clone()));
    }
    let economy = &models[0].model.economy;
    let shocked: Vec<usize> = (0..n).filter(|&j| economy.tradeable()[j]).collect();
    let results: Vec<_> = shocked
        .par_iter()
        .map(|&j| {
            let mut pt = DVector::from_element(n, 1.0);
            pt[j] = 1.0 + magnitude;
            (j, solve_all(models, &Shock::import_price(pt)))
        })
        .collect();
    let codes = economy.codes();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (j, result) in results {
        match result {
            Ok(solved) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| solved[0].0[b].total_cmp(&solved[0].0[a]).then(a.cmp(&b)));
                for (rank, &i) in order.iter().take(top_k).enumerate() {
                    rows.push(PriceResponseRow {
                        shocked: codes[j].clone(),
                        sector: codes[i].clone(),
                        rank: rank + 1,
                        responses: solved.iter().map(|(p, _)| p[i] - 1.0).collect(),
                    });
                }
            }
            Err((calibration, error)) => failures.push(ScenarioFailure {
                scenario: codes[j].clone(),
                calibration,
                error,
            }),
        }
    }
    Ok(ForeignPriceReport {
        magnitude,
        top_k,
        calibrations: names(models),
        rows,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdpResponseRow {
    pub sector: String,
    /// Log change of real GDP, one entry per calibration.
    pub dlog_gdp: Vec<f64>,
    /// First calibration minus second; zero with a single calibration.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SevereTfpReport {
    pub magnitude: f64,
    pub calibrations: Vec<String>,
    /// Sorted by `|difference|`, largest first.
    pub rows: Vec<GdpResponseRow>,
    pub failures: Vec<ScenarioFailure>,
}

impl SevereTfpReport {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sector".to_string()];
        header.extend(self.calibrations.iter().cloned());
        header.push("difference".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.sector.clone()];
            rec.extend(r.dlog_gdp.iter().map(|v| format!("{v:.9}")));
            rec.push(format!("{:.9}", r.difference));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scales each sector's productivity by `1 + magnitude`, one at a time.
pub fn severe_tfp_experiment(
    models: &[NamedModel],
    magnitude: f64,
) -> Result<SevereTfpReport, ShockError> {
    let n = check_models(models)?;
    if magnitude <= -1.0 {
        return Err(EquilibriumError::Domain {
            what: "z",
            index: 0,
            value: 1.0 + magnitude,
        }
        .into());
    }
    let results: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut z = DVector::from_element(n, 1.0);
            z[i] = 1.0 + magnitude;
            solve_all(models, &Shock::productivity(z))
        })
        .collect();
    let codes = models[0].model.economy.codes();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(solved) => {
                let dlog_gdp: Vec<f64> = solved.iter().map(|(_, g)| *g).collect();
                let difference = if dlog_gdp.len() > 1 {
                    dlog_gdp[0] - dlog_gdp[1]
                } else {
                    0.0
                };
                rows.push(GdpResponseRow {
                    sector: codes[i].clone(),
                    dlog_gdp,
                    difference,
                });
            }
            Err((calibration, error)) => failures.push(ScenarioFailure {
                scenario: codes[i].clone(),
                calibration,
                error,
            }),
        }
    }
    rows.sort_by(|a, b| b.difference.abs().total_cmp(&a.difference.abs()));
    Ok(SevereTfpReport {
        magnitude,
        calibrations: names(models),
        rows,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusinessCycleReport {
    pub seed: u64,
    pub n_draws: usize,
    /// Draws that failed under any calibration and were dropped from all.
    pub dropped: Vec<usize>,
    pub calibrations: Vec<String>,
    pub sectors: Vec<String>,
    /// Log change of real GDP by calibration.
    pub gdp: Vec<Summary>,
    /// Mean of `P / P_base - 1` over kept draws, by calibration then sector.
    pub mean_price_response: Vec<Vec<f64>>,
    /// Log GDP change of every kept draw, by calibration.
    pub gdp_draws: Vec<Vec<f64>>,
}

impl BusinessCycleReport {
    /// One row per calibration: mean, sd and skewness of the GDP change.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["calibration", "mean", "sd", "skewness", "draws", "dropped"])?;
        for (name, s) in self.calibrations.iter().zip(&self.gdp) {
            w.write_record([
                name.clone(),
                format!("{:.9}", s.mean),
                format!("{:.9}", s.sd),
                format!("{:.9}", s.skewness),
                s.n.to_string(),
                self.dropped.len().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per sector with the mean price response per calibration.
    pub fn write_prices_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sector".to_string()];
        header.extend(self.calibrations.iter().cloned());
        w.write_record(&header)?;
        for (i, code) in self.sectors.iter().enumerate() {
            let mut rec = vec![code.clone()];
            rec.extend(
                self.mean_price_response
                    .iter()
                    .map(|c| format!("{:.9}", c[i])),
            );
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Histogram of each calibration's GDP draws on common bin edges.
    pub fn histograms(&self, bins: usize) -> Vec<Histogram> {
        let all: Vec<f64> = self.gdp_draws.iter().flatten().copied().collect();
        let common = histogram(&all, bins);
        self.gdp_draws
            .iter()
            .map(|draws| {
                let mut counts = vec![0; common.counts.len()];
                if let (Some(lo), Some(hi)) = (common.edges.first(), common.edges.last()) {
                    let width = (hi - lo) / counts.len() as f64;
                    for v in draws {
                        let k = (((v - lo) / width) as usize).min(counts.len() - 1);
                        counts[k] += 1;
                    }
                }
                Histogram {
                    edges: common.edges.clone(),
                    counts,
                }
            })
            .collect()
    }
}

/// Draws `n_draws` log-productivity vectors from `N(0, cov)` and solves each
/// under every calibration.
pub fn business_cycle_experiment(
    models: &[NamedModel],
    cov: &DMatrix<f64>,
    n_draws: usize,
    seed: u64,
) -> Result<BusinessCycleReport, ShockError> {
    let n = check_models(models)?;
    if cov.shape() != (n, n) {
        return Err(ShockError::Dimension {
            rows: cov.nrows(),
            cols: cov.ncols(),
            expected: n,
        });
    }
    let draws = mvn_sample(cov, n_draws, seed)?;
    let empty = DVector::zeros(n);
    let results: Vec<_> = draws
        .par_iter()
        .map(|d| solve_all(models, &Shock::from_logs(d, &empty, 0.0)))
        .collect();
    let k = models.len();
    let mut dropped = Vec::new();
    let mut gdp_draws = vec![Vec::with_capacity(n_draws); k];
    let mut price_sum = vec![DVector::<f64>::zeros(n); k];
    for (d, result) in results.into_iter().enumerate() {
        match result {
            Ok(solved) => {
                for (c, (p, g)) in solved.into_iter().enumerate() {
                    gdp_draws[c].push(g);
                    price_sum[c] += p.add_scalar(-1.0);
                }
            }
            Err((calibration, error)) => {
                log::warn!("draw {d} dropped: {calibration}: {error}");
                dropped.push(d);
            }
        }
    }
    let kept = (n_draws - dropped.len()).max(1) as f64;
    Ok(BusinessCycleReport {
        seed,
        n_draws,
        dropped,
        calibrations: names(models),
        sectors: models[0].model.economy.codes().to_vec(),
        gdp: gdp_draws.iter().map(|g| Summary::of(g)).collect(),
        mean_price_response: price_sum
            .iter()
            .map(|s| (s / kept).iter().copied().collect())
            .collect(),
        gdp_draws,
    })
}
