//! Calibration and exact solution of the nested-CES production network.
//!
//! Every sector combines a fixed labor endowment with an intermediate bundle.
//! The bundle aggregates composite inputs, and each composite input mixes the
//! domestic variety with an imported one priced at `E * Ptilde_j`. Households
//! consume domestic goods only and foreigners demand exports along an
//! isoelastic schedule.
//!
//! The exchange rate `E` is exogenous. When the calibrated economy trades,
//! household expenditure is endogenous and the foreign price level pins the
//! nominal scale; without trade, household expenditure is the numeraire.

mod calibrate;
mod check;
mod cost;
mod solver;

pub use calibrate::{calibrate, CalibratedModel, MODEL_SCHEMA_VERSION};
pub use check::{check_equilibrium, EquilibriumResiduals};
pub use cost::{
    ces_price_index, consumption_price_index, share_system, unit_cost_indices, CostIndices,
    ShareSystem, UNIT_ELASTICITY_TOL,
};
pub use solver::{
    real_gdp, solve_equilibrium, solve_equilibrium_with, EquilibriumState, SolverOptions,
};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::economy::CoreError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("snapshot fails validation: {0}")]
    InvalidSnapshot(String),
    #[error("calibrated gross output of sector {sector} is not positive ({value})")]
    NegativeOutput { sector: String, value: f64 },
    #[error("nonpositive or non-finite {what} at index {index}: {value}")]
    Domain {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("market-clearing system is singular")]
    SingularMarketClearing,
    #[error("negative sales for sector {sector} ({value}); the shock is inadmissible")]
    NegativeSales { sector: String, value: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },
}

/// Exogenous state: productivities, foreign-currency import prices and the
/// exchange rate. The base year has every entry equal to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    #[serde(with = "crate::serde_matrix::vector")]
    pub z: DVector<f64>,
    #[serde(with = "crate::serde_matrix::vector")]
    pub p_tilde: DVector<f64>,
    pub e: f64,
}

impl Shock {
    pub fn base(n: usize) -> Self {
        Self {
            z: DVector::from_element(n, 1.0),
            p_tilde: DVector::from_element(n, 1.0),
            e: 1.0,
        }
    }

    pub fn productivity(z: DVector<f64>) -> Self {
        let n = z.len();
        Self { z, ..Self::base(n) }
    }

    pub fn import_price(p_tilde: DVector<f64>) -> Self {
        let n = p_tilde.len();
        Self {
            p_tilde,
            ..Self::base(n)
        }
    }

    /// Builds a shock from log deviations.
    pub fn from_logs(dlog_z: &DVector<f64>, dlog_p_tilde: &DVector<f64>, dlog_e: f64) -> Self {
        Self {
            z: dlog_z.map(f64::exp),
            p_tilde: dlog_p_tilde.map(f64::exp),
            e: dlog_e.exp(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), EquilibriumError> {
        for (what, v) in [("z", &self.z), ("p_tilde", &self.p_tilde)] {
            if v.len() != n {
                return Err(CoreError::DimensionMismatch {
                    what,
                    expected: n,
                    found: v.len(),
                }
                .into());
            }
            positive(what, v.as_slice())?;
        }
        positive("e", &[self.e])
    }
}

pub(crate) fn positive(what: &'static str, v: &[f64]) -> Result<(), EquilibriumError> {
    match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(index) => Err(EquilibriumError::Domain {
            what,
            index,
            value: v[index],
        }),
        None => Ok(()),
    }
}
