//! Linearized responses of prices, wages, sales shares and real GDP.
//!
//! The first-order system stacks `(dlog P, dlog W, dlambda, dlog X)` where
//! `X` is household expenditure; `dlog X` is identically zero when
//! expenditure is the numeraire. It is assembled by evaluating the linear
//! equilibrium conditions at unit vectors and solved by dense LU, so it is
//! the exact derivative of what [`crate::equilibrium::solve_equilibrium`]
//! computes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::economy::{CoreError, Economy};
use crate::equilibrium::{CalibratedModel, EquilibriumState};

/// Sales shares below this are rejected by the wage block.
pub const MIN_SALES_SHARE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("sales share of sector {sector} is {value:.3e}; wage response undefined")]
    VanishingSales { sector: String, value: f64 },
    #[error("first-order system is singular")]
    SingularSystem,
    #[error("xi = 1 makes the import-ratio coefficient singular")]
    UnitArmington,
}

/// Log-changes of the composite input prices and of the bundle price index.
pub fn price_index_derivatives(
    state: &EquilibriumState,
    dlog_p: &DVector<f64>,
    dlog_p_tilde: &DVector<f64>,
    dlog_e: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = dlog_p.len();
    let phi = &state.shares.phi;
    let pbar = DMatrix::from_fn(n, n, |i, j| {
        phi[(i, j)] * dlog_p[j] + (1.0 - phi[(i, j)]) * (dlog_p_tilde[j] + dlog_e)
    });
    let q = DVector::from_fn(n, |i, _| {
        (0..n)
            .map(|j| state.shares.omega[(i, j)] * pbar[(i, j)])
            .sum()
    });
    (pbar, q)
}

/// Log-changes of the input-output matrix and household budget shares.
#[derive(Debug, Clone, PartialEq)]
pub struct IoDerivative {
    pub a: DMatrix<f64>,
    pub a0: DVector<f64>,
}

/// `dlog a_ij` from the nested cost shares; productivity enters through the
/// labor share because `Gamma_i` depends on `W_i / (P_i Z_i)`.
pub fn io_matrix_derivative(
    model: &CalibratedModel,
    state: &EquilibriumState,
    dlog_p: &DVector<f64>,
    dlog_pbar: &DMatrix<f64>,
    dlog_q: &DVector<f64>,
    dlog_z: &DVector<f64>,
) -> IoDerivative {
    let n = model.n_sectors();
    let el = &model.elasticities;
    let (sigma, xi, nu) = (el.sigma, el.xi, el.nu);
    let a = DMatrix::from_fn(n, n, |i, j| {
        let theta = el.theta[i];
        (sigma - 1.0) * (dlog_p[i] + dlog_z[i])
            + (theta - sigma) * dlog_q[i]
            + (xi - theta) * dlog_pbar[(i, j)]
            + (1.0 - xi) * dlog_p[j]
    });
    let dlog_pc = state.shares.a0.dot(dlog_p);
    let a0 = dlog_p.map(|p| (1.0 - nu) * (p - dlog_pc));
    IoDerivative { a, a0 }
}

/// First-order equilibrium responses to log shocks.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderResponse {
    pub dlog_p: DVector<f64>,
    pub dlog_w: DVector<f64>,
    /// Level change in sales shares.
    pub dlambda: DVector<f64>,
    /// Log change in household expenditure.
    pub dlog_expenditure: f64,
    pub dlog_gdp: f64,
    /// Max residual of the assembled linear system at the solution.
    pub residual: f64,
}

impl FirstOrderResponse {
    /// CSV table with one row per sector.
    pub fn write_csv<W: Write>(&self, economy: &Economy, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sector", "dlog_p", "dlog_w", "dlambda"])?;
        for (i, code) in economy.codes().iter().enumerate() {
            w.write_record([
                code.clone(),
                format!("{:.12e}", self.dlog_p[i]),
                format!("{:.12e}", self.dlog_w[i]),
                format!("{:.12e}", self.dlambda[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct LinearSystem<'a> {
    model: &'a CalibratedModel,
    state: &'a EquilibriumState,
    n: usize,
}

impl LinearSystem<'_> {
    fn dim(&self) -> usize {
        3 * self.n + 1
    }

    /// Residual of the linearized equilibrium conditions; affine in `u`.
    fn residual(
        &self,
        u: &DVector<f64>,
        dlog_z: &DVector<f64>,
        dlog_p_tilde: &DVector<f64>,
        dlog_e: f64,
    ) -> DVector<f64> {
        let n = self.n;
        let model = self.model;
        let sh = &self.state.shares;
        let lambda = &self.state.lambda;
        let el = &model.elasticities;
        let sigma = el.sigma;
        let p = u.rows(0, n).into_owned();
        let w = u.rows(n, n);
        let dl = u.rows(2 * n, n);
        let x = u[3 * n];
        let (pbar, q) = price_index_derivatives(self.state, &p, dlog_p_tilde, dlog_e);
        let dlog_a = io_matrix_derivative(model, self.state, &p, &pbar, &q, dlog_z);

        let mut r = DVector::zeros(self.dim());
        for i in 0..n {
            let mut price = p[i] - sh.labor[i] * w[i] + dlog_z[i];
            for j in 0..n {
                price -= sh.a[(i, j)] * p[j] + sh.a_import[(i, j)] * (dlog_p_tilde[j] + dlog_e);
            }
            r[i] = price;

            r[n + i] = if model.gamma[i] == 0.0 || model.labor[i] == 0.0 {
                w[i]
            } else {
                w[i] - (1.0 - 1.0 / sigma) * (p[i] + dlog_z[i]) - (dl[i] / lambda[i] + x) / sigma
            };
        }
        for j in 0..n {
            let mut sales = dl[j] - sh.a0[j] * dlog_a.a0[j];
            for k in 0..n {
                sales -= sh.a[(k, j)] * (dl[k] + lambda[k] * dlog_a.a[(k, j)]);
            }
            let nx = sh.nx[j] / self.state.expenditure;
            if nx != 0.0 {
                let dlog_nx = (1.0 - el.xi_export) * p[j] + el.xi_export * dlog_e;
                sales -= nx * (dlog_nx - x);
            }
            r[2 * n + j] = sales;
        }
        r[3 * n] = if model.expenditure_endogenous() {
            (0..n)
                .map(|i| {
                    let dlog_labor_share = (1.0 - sigma) * (w[i] - p[i] - dlog_z[i]);
                    lambda[i] * sh.labor[i] * dlog_labor_share + sh.labor[i] * dl[i]
                })
                .sum()
        } else {
            x
        };
        r
    }

    fn jacobian(&self) -> DMatrix<f64> {
        let m = self.dim();
        let zn = DVector::zeros(self.n);
        let mut jac = DMatrix::zeros(m, m);
        let mut unit = DVector::zeros(m);
        for k in 0..m {
            unit[k] = 1.0;
            jac.set_column(k, &self.residual(&unit, &zn, &zn, 0.0));
            unit[k] = 0.0;
        }
        jac
    }
}

pub fn first_order_response(
    model: &CalibratedModel,
    state: &EquilibriumState,
    dlog_z: &DVector<f64>,
    dlog_p_tilde: &DVector<f64>,
    dlog_e: f64,
) -> Result<FirstOrderResponse, AnalyticsError> {
    let n = model.n_sectors();
    for (what, len) in [
        ("dlog_z", dlog_z.len()),
        ("dlog_p_tilde", dlog_p_tilde.len()),
    ] {
        if len != n {
            return Err(CoreError::DimensionMismatch {
                what,
                expected: n,
                found: len,
            }
            .into());
        }
    }
    if let Some(i) = state.lambda.iter().position(|l| *l < MIN_SALES_SHARE) {
        return Err(AnalyticsError::VanishingSales {
            sector: model.economy.codes()[i].clone(),
            value: state.lambda[i],
        });
    }
    let sys = LinearSystem { model, state, n };
    let jac = sys.jacobian();
    let zero = DVector::zeros(sys.dim());
    let rhs = -sys.residual(&zero, dlog_z, dlog_p_tilde, dlog_e);
    let u = jac
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(AnalyticsError::SingularSystem)?;
    if u.iter().any(|v| !v.is_finite()) {
        return Err(AnalyticsError::SingularSystem);
    }
    let residual = (&jac * &u - &rhs).amax();
    let dlog_p = u.rows(0, n).into_owned();
    let dlog_expenditure = u[3 * n];
    let dlog_gdp = dlog_expenditure - state.shares.a0.dot(&dlog_p);
    Ok(FirstOrderResponse {
        dlog_w: u.rows(n, n).into_owned(),
        dlambda: u.rows(2 * n, n).into_owned(),
        dlog_p,
        dlog_expenditure,
        dlog_gdp,
        residual,
    })
}

/// Second-order approximation of the log GDP change from shocking one
/// sector's productivity: `lambda_i dz + (dlambda_i/dlog Z_i) dz^2 / 2`.
pub fn gdp_second_order(
    model: &CalibratedModel,
    state: &EquilibriumState,
    sector: usize,
    dlog_z: f64,
) -> Result<f64, AnalyticsError> {
    let n = model.n_sectors();
    if sector >= n {
        return Err(CoreError::DimensionMismatch {
            what: "sector index",
            expected: n,
            found: sector,
        }
        .into());
    }
    if dlog_z == 0.0 {
        return Ok(0.0);
    }
    let mut unit = DVector::zeros(n);
    unit[sector] = 1.0;
    let resp = first_order_response(model, state, &unit, &DVector::zeros(n), 0.0)?;
    Ok(state.lambda[sector] * dlog_z + 0.5 * resp.dlambda[sector] * dlog_z * dlog_z)
}

/// Predicted log change of each purchaser's domestic expenditure share
/// `Omega_ij * Phi_ij` given supplier price changes and import-ratio changes.
///
/// The purchaser effect `(theta_i - 1) dlog Q_i` is computed from the implied
/// composite-price changes `dlog P_j + dlog Phi_ij / (xi - 1)`.
pub fn reduced_form_check(
    model: &CalibratedModel,
    state: &EquilibriumState,
    dlog_p: &DVector<f64>,
    dlog_phi: &DMatrix<f64>,
) -> Result<DMatrix<f64>, AnalyticsError> {
    let n = model.n_sectors();
    let xi = model.elasticities.xi;
    if xi == 1.0 {
        return Err(AnalyticsError::UnitArmington);
    }
    if dlog_p.len() != n || dlog_phi.shape() != (n, n) {
        return Err(CoreError::DimensionMismatch {
            what: "reduced-form inputs",
            expected: n,
            found: dlog_p.len(),
        }
        .into());
    }
    let omega = &state.shares.omega;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let theta = model.elasticities.theta[i];
        let dlog_q: f64 = (0..n)
            .map(|j| omega[(i, j)] * (dlog_p[j] + dlog_phi[(i, j)] / (xi - 1.0)))
            .sum();
        let eta = (theta - 1.0) * dlog_q;
        for j in 0..n {
            out[(i, j)] =
                (1.0 - theta) * dlog_p[j] + (xi - theta) / (xi - 1.0) * dlog_phi[(i, j)] + eta;
        }
    }
    Ok(out)
}
