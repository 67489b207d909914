use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::tables::TfpPanel;
use super::IngestError;
use crate::serde_matrix;

/// Covariance of multi-year log-TFP growth across sectors; symmetric and
/// positive semidefinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfpCovariance {
    #[serde(with = "serde_matrix::matrix")]
    pub cov: DMatrix<f64>,
    pub horizon_years: usize,
    pub n_differences: usize,
}

/// Symmetrizes and clips negative eigenvalues to zero.
pub fn clip_to_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

/// Sample covariance of `horizon_years`-apart log-TFP differences.
///
/// With `overlapping` every start year is used; otherwise start years step
/// by the horizon from the first year. At least two differences are needed.
pub fn tfp_covariance(
    panel: &TfpPanel,
    horizon_years: usize,
    overlapping: bool,
) -> Result<TfpCovariance, IngestError> {
    let n = panel.industries.len();
    let first = panel.years.keys().next().copied();
    let h = horizon_years as i32;
    let step = if overlapping { 1 } else { h.max(1) };
    let diffs: Vec<DVector<f64>> = panel
        .years
        .iter()
        .filter(|(y, _)| first.is_some_and(|f| (**y - f) % step == 0))
        .filter_map(|(y, v)| panel.years.get(&(y + h)).map(|later| later - v))
        .collect();
    let m = diffs.len();
    if m < 2 {
        return Err(IngestError::InsufficientYears {
            needed: horizon_years + 2,
            found: panel.years.len(),
        });
    }
    let mean = diffs.iter().fold(DVector::zeros(n), |acc, d| acc + d) / m as f64;
    let mut cov = DMatrix::zeros(n, n);
    for d in &diffs {
        let c = d - &mean;
        cov += &c * c.transpose();
    }
    cov /= (m - 1) as f64;
    Ok(TfpCovariance {
        cov: clip_to_psd(&cov),
        horizon_years,
        n_differences: m,
    })
}
