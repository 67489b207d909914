use nalgebra::{DMatrix, DVector};

use super::{positive, CalibratedModel, EquilibriumError, Shock};
use crate::economy::clean_share;

/// Elasticities within this distance of one use the Cobb-Douglas form.
pub const UNIT_ELASTICITY_TOL: f64 = 1e-10;

/// Unit cost of a CES aggregator with substitution elasticity `rho`.
///
/// `rho = 0` is the Leontief (linear) limit and `rho = 1` the Cobb-Douglas
/// limit. Entries with zero weight are skipped; an aggregator with no
/// positive weight has unit cost one.
pub fn ces_price_index<I>(weighted_prices: I, rho: f64) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut any = false;
    if (rho - 1.0).abs() < UNIT_ELASTICITY_TOL {
        let mut log = 0.0;
        for (w, p) in weighted_prices {
            if w > 0.0 {
                log += w * p.ln();
                any = true;
            }
        }
        return if any { log.exp() } else { 1.0 };
    }
    let mut sum = 0.0;
    if rho == 0.0 {
        for (w, p) in weighted_prices {
            if w > 0.0 {
                sum += w * p;
                any = true;
            }
        }
        return if any { sum } else { 1.0 };
    }
    let e = 1.0 - rho;
    for (w, p) in weighted_prices {
        if w > 0.0 {
            sum += w * p.powf(e);
            any = true;
        }
    }
    if any {
        sum.powf(1.0 / e)
    } else {
        1.0
    }
}

/// `(weight * (index / price)^(rho - 1))`, the CES expenditure share.
#[inline]
pub(crate) fn ces_share(weight: f64, price: f64, index: f64, rho: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        weight * (price / index).powf(1.0 - rho)
    }
}

/// Price indices of the three production nests.
#[derive(Debug, Clone, PartialEq)]
pub struct CostIndices {
    /// Composite domestic/imported input prices, `pbar[(i, j)]`.
    pub pbar: DMatrix<f64>,
    /// Intermediate-bundle price index per purchaser.
    pub q: DVector<f64>,
    /// Unit cost before dividing by productivity.
    pub c: DVector<f64>,
    /// Implied domestic price `c / Z`.
    pub p_implied: DVector<f64>,
}

pub fn unit_cost_indices(
    model: &CalibratedModel,
    p: &DVector<f64>,
    w: &DVector<f64>,
    shock: &Shock,
) -> Result<CostIndices, EquilibriumError> {
    let n = model.n_sectors();
    shock.validate(n)?;
    positive("P", p.as_slice())?;
    positive("W", w.as_slice())?;
    let el = &model.elasticities;
    let pbar = DMatrix::from_fn(n, n, |i, j| {
        let phi = model.phi[(i, j)];
        if phi == 1.0 {
            p[j]
        } else {
            let foreign = shock.e * shock.p_tilde[j];
            ces_price_index([(phi, p[j]), (1.0 - phi, foreign)], el.xi)
        }
    });
    let q = DVector::from_fn(n, |i, _| {
        ces_price_index(
            (0..n).map(|j| (model.omega[(i, j)], pbar[(i, j)])),
            el.theta[i],
        )
    });
    let c = DVector::from_fn(n, |i, _| {
        ces_price_index(
            [(model.gamma[i], w[i]), (1.0 - model.gamma[i], q[i])],
            el.sigma,
        )
    });
    let p_implied = c.component_div(&shock.z);
    Ok(CostIndices {
        pbar,
        q,
        c,
        p_implied,
    })
}

/// Household price index over domestic goods.
pub fn consumption_price_index(beta: &DVector<f64>, p: &DVector<f64>, nu: f64) -> f64 {
    ces_price_index(beta.iter().copied().zip(p.iter().copied()), nu)
}

/// Expenditure shares implied by a price vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareSystem {
    /// Labor share of cost, `Gamma_i`.
    pub labor: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    /// Domestic input-output matrix `(1 - Gamma) Omega Phi`.
    pub a: DMatrix<f64>,
    /// Imported input-output matrix `(1 - Gamma) Omega (1 - Phi)`.
    pub a_import: DMatrix<f64>,
    /// Household budget shares.
    pub a0: DVector<f64>,
    /// Export revenue `P_j * C^f_j` in numeraire units.
    pub nx: DVector<f64>,
    pub consumption_price: f64,
}

pub fn share_system(
    model: &CalibratedModel,
    p: &DVector<f64>,
    w: &DVector<f64>,
    shock: &Shock,
    idx: &CostIndices,
) -> ShareSystem {
    let n = model.n_sectors();
    let el = &model.elasticities;
    let labor = DVector::from_fn(n, |i, _| {
        clean_share(ces_share(model.gamma[i], w[i], idx.c[i], el.sigma))
    });
    let omega = DMatrix::from_fn(n, n, |i, j| {
        clean_share(ces_share(
            model.omega[(i, j)],
            idx.pbar[(i, j)],
            idx.q[i],
            el.theta[i],
        ))
    });
    let phi = DMatrix::from_fn(n, n, |i, j| {
        let phi = model.phi[(i, j)];
        if phi == 1.0 {
            1.0
        } else {
            clean_share(ces_share(phi, p[j], idx.pbar[(i, j)], el.xi))
        }
    });
    let a = DMatrix::from_fn(n, n, |i, j| (1.0 - labor[i]) * omega[(i, j)] * phi[(i, j)]);
    let a_import = DMatrix::from_fn(n, n, |i, j| {
        (1.0 - labor[i]) * omega[(i, j)] * (1.0 - phi[(i, j)])
    });
    let consumption_price = consumption_price_index(&model.beta, p, el.nu);
    let a0 = DVector::from_fn(n, |j, _| {
        clean_share(ces_share(model.beta[j], p[j], consumption_price, el.nu))
    });
    let nx = DVector::from_fn(n, |j, _| {
        if model.phi_f[j] == 0.0 {
            0.0
        } else {
            p[j] * model.phi_f[j] * (p[j] / shock.e).powf(-el.xi_export)
        }
    });
    ShareSystem {
        labor,
        omega,
        phi,
        a,
        a_import,
        a0,
        nx,
        consumption_price,
    }
}
