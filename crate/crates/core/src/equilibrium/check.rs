//! Equilibrium conditions verified in quantities, separately from the solver.
//!
//! Input demands come from Shephard's lemma on the cost duals and are fed
//! back through the primal production functions, so a share-formula error in
//! the solver shows up here as a residual.

use nalgebra::DMatrix;

use super::cost::{ces_price_index, UNIT_ELASTICITY_TOL};
use super::solver::EquilibriumState;
use super::{CalibratedModel, Shock};

/// Relative violations of each block of equilibrium conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EquilibriumResiduals {
    /// Labor demand against the fixed endowment (the wage FOC).
    pub labor_market: f64,
    /// Gross output against intermediate, household and export demand.
    pub goods_market: f64,
    /// Output against the primal production function at demanded inputs.
    pub technology: f64,
    /// Revenue against total cost.
    pub zero_profit: f64,
    /// Household spending against labor income, and the consumption
    /// aggregate against expenditure over the consumption price index.
    pub household: f64,
}

impl EquilibriumResiduals {
    pub fn max(&self) -> f64 {
        [
            self.labor_market,
            self.goods_market,
            self.technology,
            self.zero_profit,
            self.household,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Primal CES aggregate `(sum w^(1/rho) x^((rho-1)/rho))^(rho/(rho-1))`.
fn primal_ces<I: IntoIterator<Item = (f64, f64)>>(weighted_quantities: I, rho: f64) -> f64 {
    let items: Vec<(f64, f64)> = weighted_quantities
        .into_iter()
        .filter(|(w, _)| *w > 0.0)
        .collect();
    if items.is_empty() {
        return 0.0;
    }
    if (rho - 1.0).abs() < UNIT_ELASTICITY_TOL {
        return items
            .iter()
            .map(|(w, x)| w * (x / w).ln())
            .sum::<f64>()
            .exp();
    }
    if rho == 0.0 {
        return items
            .iter()
            .map(|(w, x)| x / w)
            .fold(f64::INFINITY, f64::min);
    }
    let r = (rho - 1.0) / rho;
    items
        .iter()
        .map(|(w, x)| w.powf(1.0 / rho) * x.powf(r))
        .sum::<f64>()
        .powf(1.0 / r)
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn check_equilibrium(
    model: &CalibratedModel,
    shock: &Shock,
    state: &EquilibriumState,
) -> EquilibriumResiduals {
    let n = model.n_sectors();
    let el = &model.elasticities;
    let (p, w) = (&state.p, &state.w);
    let foreign = |j: usize| shock.e * shock.p_tilde[j];

    let mut out = EquilibriumResiduals::default();
    let mut x_dom = DMatrix::zeros(n, n);
    let mut labor_income = 0.0;

    for i in 0..n {
        let pbar: Vec<f64> = (0..n)
            .map(|j| {
                let phi = model.phi[(i, j)];
                ces_price_index([(phi, p[j]), (1.0 - phi, foreign(j))], el.xi)
            })
            .collect();
        let q = ces_price_index((0..n).map(|j| (model.omega[(i, j)], pbar[j])), el.theta[i]);
        let gamma = model.gamma[i];
        let c = ces_price_index([(gamma, w[i]), (1.0 - gamma, q)], el.sigma);
        let y = state.y[i];
        let z = shock.z[i];

        // Shephard's lemma on each nest.
        let labor = y / z * gamma * (c / w[i]).powf(el.sigma);
        let bundle = y / z * (1.0 - gamma) * (c / q).powf(el.sigma);
        let mut cost = w[i] * labor;
        let mut composites = Vec::with_capacity(n);
        for j in 0..n {
            let omega = model.omega[(i, j)];
            let composite = bundle * omega * (q / pbar[j]).powf(el.theta[i]);
            let phi = model.phi[(i, j)];
            let dom = composite * phi * (pbar[j] / p[j]).powf(el.xi);
            let imp = composite * (1.0 - phi) * (pbar[j] / foreign(j)).powf(el.xi);
            x_dom[(i, j)] = dom;
            cost += p[j] * dom + foreign(j) * imp;
            if omega > 0.0 {
                let armington = primal_ces([(phi, dom), (1.0 - phi, imp)], el.xi);
                out.technology = out.technology.max(rel(armington, composite));
            }
            composites.push((omega, composite));
        }
        if 1.0 - gamma > 0.0 {
            let m = primal_ces(composites, el.theta[i]);
            out.technology = out.technology.max(rel(m, bundle));
        }
        let output = z * primal_ces([(gamma, labor), (1.0 - gamma, bundle)], el.sigma);
        out.technology = out.technology.max(rel(output, y));
        out.zero_profit = out.zero_profit.max(rel(p[i] * y, cost));
        if model.labor[i] > 0.0 {
            out.labor_market = out.labor_market.max(rel(labor, model.labor[i]));
        }
        labor_income += w[i] * model.labor[i];
    }

    // Household demand from its own optimality conditions.
    let pc = ces_price_index(model.beta.iter().copied().zip(p.iter().copied()), el.nu);
    let real = labor_income / pc;
    let mut spending = 0.0;
    let mut demand = Vec::with_capacity(n);
    for j in 0..n {
        let cj = model.beta[j] * (p[j] / pc).powf(-el.nu) * real;
        spending += p[j] * cj;
        demand.push((model.beta[j], cj));
        let exports = if model.phi_f[j] > 0.0 {
            model.phi_f[j] * (p[j] / shock.e).powf(-el.xi_export)
        } else {
            0.0
        };
        let used: f64 = (0..n).map(|i| x_dom[(i, j)]).sum();
        out.goods_market = out.goods_market.max(rel(state.y[j], used + cj + exports));
        out.household = out.household.max(rel(state.consumption[j], cj));
    }
    out.household = out
        .household
        .max(rel(spending, labor_income))
        .max(rel(primal_ces(demand, el.nu), real));
    out
}
