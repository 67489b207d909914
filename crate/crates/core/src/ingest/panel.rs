use std::collections::HashMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::shares::{
    classify_tradeable, compute_expenditure_shares, compute_import_ratios, household_shares,
};
use super::tables::SupplyUseTables;
use super::IngestError;

/// Year-over-year log changes for one purchaser-input pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub i: usize,
    pub j: usize,
    pub t: i32,
    pub dlog_omega: f64,
    pub dlog_p: f64,
    pub dlog_phi: f64,
}

/// Year-over-year log changes of one household budget share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdObservation {
    pub j: usize,
    pub t: i32,
    pub dlog_share: f64,
    pub dlog_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelOptions {
    pub min_avg_share: f64,
    pub tradeable_threshold: f64,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            min_avg_share: 0.01,
            tradeable_threshold: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Pairs times year-over-year changes before filtering.
    pub candidates: usize,
    pub dropped_low_share: usize,
    pub dropped_nonfinite: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelBuild {
    pub observations: Vec<PanelObservation>,
    pub report: FilterReport,
    pub tradeable: Vec<bool>,
    /// Import ratios by year after forcing non-tradeables to one.
    pub phi: Vec<(i32, DVector<f64>)>,
}

fn consecutive_pairs(years: &[i32]) -> Vec<(i32, i32)> {
    years
        .windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| (w[0], w[1]))
        .collect()
}

fn log_change(new: f64, old: f64) -> f64 {
    new.ln() - old.ln()
}

/// Estimation panel of year-over-year changes.
///
/// Pairs whose expenditure share averages below `min_avg_share` across all
/// years are dropped, as are observations with a non-finite log change.
pub fn build_panel(
    tables: &SupplyUseTables,
    opts: &PanelOptions,
) -> Result<PanelBuild, IngestError> {
    let years = tables.year_list();
    let pairs = consecutive_pairs(&years);
    if pairs.is_empty() {
        return Err(IngestError::InsufficientYears {
            needed: 2,
            found: years.len(),
        });
    }
    let per_year: Vec<(DMatrix<f64>, DVector<f64>, DVector<f64>)> = years
        .par_iter()
        .map(|&y| {
            Ok((
                compute_expenditure_shares(tables, y)?,
                compute_import_ratios(tables, y)?,
                tables.year(y)?.price_index.clone(),
            ))
        })
        .collect::<Result<_, IngestError>>()?;

    let raw_phi: Vec<DVector<f64>> = per_year.iter().map(|(_, phi, _)| phi.clone()).collect();
    let tradeable = classify_tradeable(&raw_phi, opts.tradeable_threshold);
    let n = tables.n_industries();
    let phi: Vec<DVector<f64>> = raw_phi
        .iter()
        .map(|p| DVector::from_fn(n, |j, _| if tradeable[j] { p[j] } else { 1.0 }))
        .collect();

    let mut avg = DMatrix::zeros(n, n);
    for (omega, _, _) in &per_year {
        avg += omega;
    }
    avg /= years.len() as f64;

    let pos: HashMap<i32, usize> = years.iter().enumerate().map(|(k, y)| (*y, k)).collect();
    let mut report = FilterReport::default();
    let mut observations = Vec::new();
    for (y0, y1) in pairs {
        let (k0, k1) = (pos[&y0], pos[&y1]);
        let (om0, _, p0) = &per_year[k0];
        let (om1, _, p1) = &per_year[k1];
        for i in 0..n {
            for j in 0..n {
                report.candidates += 1;
                if avg[(i, j)] < opts.min_avg_share {
                    report.dropped_low_share += 1;
                    continue;
                }
                let obs = PanelObservation {
                    i,
                    j,
                    t: y1,
                    dlog_omega: log_change(om1[(i, j)], om0[(i, j)]),
                    dlog_p: log_change(p1[j], p0[j]),
                    dlog_phi: log_change(phi[k1][j], phi[k0][j]),
                };
                if [obs.dlog_omega, obs.dlog_p, obs.dlog_phi]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    observations.push(obs);
                } else {
                    report.dropped_nonfinite += 1;
                }
            }
        }
    }
    report.kept = observations.len();
    if report.dropped_nonfinite > 0 {
        log::warn!(
            "dropped {} observations with non-finite log changes",
            report.dropped_nonfinite
        );
    }
    Ok(PanelBuild {
        observations,
        report,
        tradeable,
        phi: years.into_iter().zip(phi).collect(),
    })
}

/// Panel of household budget-share changes against supplier price changes.
pub fn build_household_panel(
    tables: &SupplyUseTables,
    min_avg_share: f64,
) -> Result<(Vec<HouseholdObservation>, FilterReport), IngestError> {
    let years = tables.year_list();
    let pairs = consecutive_pairs(&years);
    if pairs.is_empty() {
        return Err(IngestError::InsufficientYears {
            needed: 2,
            found: years.len(),
        });
    }
    let shares: HashMap<i32, DVector<f64>> = years
        .iter()
        .map(|&y| Ok((y, household_shares(tables, y)?)))
        .collect::<Result<_, IngestError>>()?;
    let n = tables.n_industries();
    let avg = shares.values().fold(DVector::zeros(n), |acc, s| acc + s) / years.len() as f64;
    let mut report = FilterReport::default();
    let mut out = Vec::new();
    for (y0, y1) in pairs {
        let (p0, p1) = (&tables.year(y0)?.price_index, &tables.year(y1)?.price_index);
        for j in 0..n {
            report.candidates += 1;
            if avg[j] < min_avg_share {
                report.dropped_low_share += 1;
                continue;
            }
            let obs = HouseholdObservation {
                j,
                t: y1,
                dlog_share: log_change(shares[&y1][j], shares[&y0][j]),
                dlog_p: log_change(p1[j], p0[j]),
            };
            if obs.dlog_share.is_finite() && obs.dlog_p.is_finite() {
                out.push(obs);
            } else {
                report.dropped_nonfinite += 1;
            }
        }
    }
    report.kept = out.len();
    Ok((out, report))
}

#[derive(Serialize, Deserialize)]
struct PanelRecord {
    i_code: String,
    j_code: String,
    t: i32,
    dlog_omega: f64,
    dlog_p: f64,
    dlog_phi: f64,
}

/// Writes `(i_code, j_code, t, dlog_omega, dlog_p, dlog_phi)` rows.
pub fn write_panel_csv<W: Write>(
    observations: &[PanelObservation],
    codes: &[String],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in observations {
        w.serialize(PanelRecord {
            i_code: codes[o.i].clone(),
            j_code: codes[o.j].clone(),
            t: o.t,
            dlog_omega: o.dlog_omega,
            dlog_p: o.dlog_p,
            dlog_phi: o.dlog_phi,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a panel written by [`write_panel_csv`]; `#` lines are skipped.
pub fn read_panel_csv<R: Read>(
    input: R,
    codes: &[String],
) -> Result<Vec<PanelObservation>, IngestError> {
    let idx: HashMap<&str, usize> = codes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let lookup = |code: &str| {
        idx.get(code)
            .copied()
            .ok_or_else(|| IngestError::UnknownIndustry {
                file: "panel.csv".into(),
                code: code.into(),
            })
    };
    rdr.deserialize()
        .map(|r| {
            let r: PanelRecord = r.map_err(|e| IngestError::Parse {
                file: "panel.csv".into(),
                detail: e.to_string(),
            })?;
            Ok(PanelObservation {
                i: lookup(&r.i_code)?,
                j: lookup(&r.j_code)?,
                t: r.t,
                dlog_omega: r.dlog_omega,
                dlog_p: r.dlog_p,
                dlog_phi: r.dlog_phi,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct HouseholdRecord {
    j_code: String,
    t: i32,
    dlog_share: f64,
    dlog_p: f64,
}

/// Writes `(j_code, t, dlog_share, dlog_p)` rows.
pub fn write_household_csv<W: Write>(
    observations: &[HouseholdObservation],
    codes: &[String],
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for o in observations {
        w.serialize(HouseholdRecord {
            j_code: codes[o.j].clone(),
            t: o.t,
            dlog_share: o.dlog_share,
            dlog_p: o.dlog_p,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a panel written by [`write_household_csv`]; `#` lines are skipped.
pub fn read_household_csv<R: Read>(
    input: R,
    codes: &[String],
) -> Result<Vec<HouseholdObservation>, IngestError> {
    let file = "household_panel.csv";
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    rdr.deserialize()
        .map(|r| {
            let r: HouseholdRecord = r.map_err(|e| IngestError::Parse {
                file: file.into(),
                detail: e.to_string(),
            })?;
            let j = codes.iter().position(|c| *c == r.j_code).ok_or_else(|| {
                IngestError::UnknownIndustry {
                    file: file.into(),
                    code: r.j_code.clone(),
                }
            })?;
            Ok(HouseholdObservation {
                j,
                t: r.t,
                dlog_share: r.dlog_share,
                dlog_p: r.dlog_p,
            })
        })
        .collect()
}
