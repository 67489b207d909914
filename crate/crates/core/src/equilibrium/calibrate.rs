use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EquilibriumError;
use crate::economy::{
    check_invertible, validate_snapshot, CoreError, Economy, Elasticities, IOSnapshot,
};
use crate::serde_matrix;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Share parameters, endowments and elasticities of a calibrated economy.
///
/// At unit prices, wages and productivities the model reproduces the
/// base-year shares it was calibrated to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub schema_version: u32,
    pub economy: Economy,
    pub elasticities: Elasticities,
    #[serde(with = "serde_matrix::vector")]
    pub gamma: DVector<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub omega: DMatrix<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub phi: DMatrix<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub beta: DVector<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub labor: DVector<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub phi_f: DVector<f64>,
    /// Base-year gross output, equal to base-year sales shares.
    #[serde(with = "serde_matrix::vector")]
    pub base_output: DVector<f64>,
    pub base_year: i32,
    pub open_economy: bool,
}

impl CalibratedModel {
    pub fn n_sectors(&self) -> usize {
        self.gamma.len()
    }

    /// Household expenditure floats when the economy exports; otherwise it
    /// is the numeraire.
    pub fn expenditure_endogenous(&self) -> bool {
        self.phi_f.iter().any(|&x| x > 0.0)
    }

    /// Same shares and endowments under different elasticities.
    pub fn with_elasticities(&self, elasticities: Elasticities) -> Result<Self, EquilibriumError> {
        elasticities.validate(self.n_sectors())?;
        Ok(Self {
            elasticities,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let m: Self = serde_json::from_str(s).map_err(|e| e.to_string())?;
        if m.schema_version != MODEL_SCHEMA_VERSION {
            return Err(format!(
                "unsupported model schema version {} (expected {MODEL_SCHEMA_VERSION})",
                m.schema_version
            ));
        }
        let n = m.economy.n_sectors();
        let dims = [
            m.gamma.len(),
            m.omega.nrows(),
            m.omega.ncols(),
            m.phi.nrows(),
            m.phi.ncols(),
            m.beta.len(),
            m.labor.len(),
            m.phi_f.len(),
            m.base_output.len(),
        ];
        if dims.iter().any(|&d| d != n) {
            return Err(format!("model arrays do not all have {n} sectors"));
        }
        m.elasticities.validate(n).map_err(|e| e.to_string())?;
        Ok(m)
    }
}

/// Sets share parameters to base-year shares and backs out endowments.
///
/// Gross output solves the closed-economy system `Y = beta + M' Y` with
/// `M = (1 - gamma) omega`, labor is `gamma * Y`, and in the open economy the
/// export shifters make each good's base exports equal its imports.
pub fn calibrate(
    economy: &Economy,
    snapshot: &IOSnapshot,
    elasticities: &Elasticities,
    open_economy: bool,
) -> Result<CalibratedModel, EquilibriumError> {
    let n = snapshot.n_sectors();
    if economy.n_sectors() != n {
        return Err(CoreError::DimensionMismatch {
            what: "economy sectors",
            expected: n,
            found: economy.n_sectors(),
        }
        .into());
    }
    let violations = validate_snapshot(snapshot);
    if !violations.is_empty() {
        let msg: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(EquilibriumError::InvalidSnapshot(msg.join("; ")));
    }
    elasticities.validate(n)?;

    let gamma = snapshot.gamma.clone();
    let omega = snapshot.omega.clone();
    let phi = if open_economy {
        snapshot.phi.clone()
    } else {
        DMatrix::from_element(n, n, 1.0)
    };
    let beta = snapshot.a0.clone();

    let m = DMatrix::from_fn(n, n, |i, j| (1.0 - gamma[i]) * omega[(i, j)]);
    check_invertible(&m)?;
    let system = DMatrix::identity(n, n) - m.transpose();
    let y = system
        .lu()
        .solve(&beta)
        .ok_or(CoreError::NotInvertible { upper: f64::NAN })?;
    if let Some(i) = y.iter().position(|v| v.is_nan() || *v <= 0.0) {
        return Err(EquilibriumError::NegativeOutput {
            sector: economy.codes()[i].clone(),
            value: y[i],
        });
    }
    let labor = gamma.component_mul(&y);
    let phi_f = DVector::from_fn(n, |j, _| {
        (0..n)
            .map(|i| (1.0 - gamma[i]) * omega[(i, j)] * (1.0 - phi[(i, j)]) * y[i])
            .sum::<f64>()
    });

    Ok(CalibratedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        economy: economy.clone(),
        elasticities: elasticities.clone(),
        gamma,
        omega,
        phi,
        beta,
        labor,
        phi_f,
        base_output: y,
        base_year: snapshot.year,
        open_economy,
    })
}
