use nalgebra::{DMatrix, DVector};

use super::tables::{SupplyUseTables, YearTables};
use super::IngestError;
use crate::economy::{CoreError, IOSnapshot};

/// Fraction of each commodity's domestic supply made by each industry
/// (`C x N`), failing if a commodity with zero supply is used.
fn market_shares(
    tables: &SupplyUseTables,
    year: i32,
    t: &YearTables,
    used: impl Fn(usize) -> bool,
) -> Result<DMatrix<f64>, IngestError> {
    let (c, n) = t.supply.shape();
    let mut d = DMatrix::zeros(c, n);
    for ci in 0..c {
        let total: f64 = t.supply.row(ci).sum();
        if total > 0.0 {
            for j in 0..n {
                d[(ci, j)] = t.supply[(ci, j)] / total;
            }
        } else if used(ci) {
            return Err(IngestError::ZeroSupply {
                commodity: tables.commodities[ci].clone(),
                year,
            });
        }
    }
    Ok(d)
}

/// Industry-by-industry intermediate spending before normalization.
fn intermediate_spend(tables: &SupplyUseTables, year: i32) -> Result<DMatrix<f64>, IngestError> {
    let t = tables.year(year)?;
    let d = market_shares(tables, year, t, |ci| {
        t.intermediate_use.column(ci).sum() > 0.0
    })?;
    Ok(&t.intermediate_use * d)
}

/// Row-normalized industry-to-industry expenditure shares `Omega`.
///
/// Each commodity's use is attributed to industries in proportion to their
/// share of its domestic supply. Industries without intermediate spending
/// keep a zero row.
pub fn compute_expenditure_shares(
    tables: &SupplyUseTables,
    year: i32,
) -> Result<DMatrix<f64>, IngestError> {
    let mut omega = intermediate_spend(tables, year)?;
    for i in 0..omega.nrows() {
        let total: f64 = omega.row(i).sum();
        if total > 0.0 {
            omega.row_mut(i).scale_mut(1.0 / total);
        }
    }
    Ok(omega)
}

/// Domestic share of spending on each industry's goods, common across
/// purchasers: `1 - Phi_j = sum_c (Imp_c / S_c) (S_cj / S_c)` with `S_c`
/// total domestic supply, clamped to `[0, 1]`.
pub fn compute_import_ratios(
    tables: &SupplyUseTables,
    year: i32,
) -> Result<DVector<f64>, IngestError> {
    let t = tables.year(year)?;
    let (c, n) = t.supply.shape();
    let mut imported = DVector::<f64>::zeros(n);
    for ci in 0..c {
        let total: f64 = t.supply.row(ci).sum();
        if total > 0.0 {
            let ratio = t.imports[ci] / total;
            for j in 0..n {
                imported[j] += ratio * t.supply[(ci, j)] / total;
            }
        } else if t.imports[ci] > 0.0 && t.intermediate_use.column(ci).sum() > 0.0 {
            return Err(IngestError::ZeroSupply {
                commodity: tables.commodities[ci].clone(),
                year,
            });
        }
    }
    Ok(imported.map(|m| (1.0 - m).clamp(0.0, 1.0)))
}

/// Sectors whose mean imported share across years exceeds `threshold`.
pub fn classify_tradeable(phi_panel: &[DVector<f64>], threshold: f64) -> Vec<bool> {
    let Some(first) = phi_panel.first() else {
        return Vec::new();
    };
    let years = phi_panel.len() as f64;
    (0..first.len())
        .map(|j| phi_panel.iter().map(|phi| 1.0 - phi[j]).sum::<f64>() / years > threshold)
        .collect()
}

/// Household budget shares over industries' goods, summing to one.
pub fn household_shares(tables: &SupplyUseTables, year: i32) -> Result<DVector<f64>, IngestError> {
    let t = tables.year(year)?;
    let d = market_shares(tables, year, t, |ci| t.consumption[ci] > 0.0)?;
    let spend = d.transpose() * &t.consumption;
    let total = spend.sum();
    if total <= 0.0 {
        return Err(IngestError::Parse {
            file: "use.csv".into(),
            detail: format!("no household consumption in {year}"),
        });
    }
    Ok(spend / total)
}

/// Share snapshot of one year. Non-tradeable sectors are fully domestic.
///
/// The labor share is compensation over compensation plus intermediate
/// spending; sales shares and exports are relative to household spending.
pub fn build_snapshot(
    tables: &SupplyUseTables,
    year: i32,
    tradeable: &[bool],
) -> Result<IOSnapshot, IngestError> {
    let n = tables.n_industries();
    if tradeable.len() != n {
        return Err(CoreError::DimensionMismatch {
            what: "tradeable",
            expected: n,
            found: tradeable.len(),
        }
        .into());
    }
    let t = tables.year(year)?;
    let spend = intermediate_spend(tables, year)?;
    let omega = compute_expenditure_shares(tables, year)?;
    let phi_j = compute_import_ratios(tables, year)?;
    let phi = DMatrix::from_fn(n, n, |_, j| if tradeable[j] { phi_j[j] } else { 1.0 });
    let gamma = DVector::from_fn(n, |i, _| {
        let inputs: f64 = spend.row(i).sum();
        let comp = t.compensation[i];
        if comp + inputs > 0.0 {
            comp / (comp + inputs)
        } else {
            1.0
        }
    });
    let a0 = household_shares(tables, year)?;
    let household_total: f64 = t.consumption.sum();
    let d = market_shares(tables, year, t, |ci| t.exports[ci] > 0.0)?;
    let lambda = DVector::from_fn(n, |i, _| t.supply.column(i).sum() / household_total);
    let nx = d.transpose() * &t.exports / household_total;
    Ok(IOSnapshot::from_shares(
        year, omega, phi, gamma, a0, lambda, nx,
    )?)
}
