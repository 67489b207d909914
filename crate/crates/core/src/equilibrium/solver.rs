//! Damped fixed-point solver.
//!
//! The inner iteration always works with household expenditure as the
//! numeraire. An open economy's true nominal scale is set by the exogenous
//! exchange rate instead, so the inner problem is solved at a rescaled
//! exchange rate `k * E`, with `k` chosen so that labor income equals
//! expenditure (balanced trade). Every equilibrium condition is homogeneous
//! of degree one in nominal prices and `E`, so dividing the frame solution
//! by `k` gives the equilibrium at `E`.

use nalgebra::{DMatrix, DVector};

use super::check::{check_equilibrium, EquilibriumResiduals};
use super::cost::{share_system, unit_cost_indices, CostIndices, ShareSystem, UNIT_ELASTICITY_TOL};
use super::{CalibratedModel, EquilibriumError, Shock};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Initial weight on the updated iterate.
    pub damping: f64,
    pub min_damping: f64,
    /// Iteration budget across all inner solves.
    pub max_iterations: usize,
    /// Convergence threshold on the largest log change of the undamped map.
    pub tolerance: f64,
    /// Threshold on `|log(labor income / expenditure)|` for open economies.
    pub balance_tolerance: f64,
    pub max_balance_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            min_damping: 1.0 / 1024.0,
            max_iterations: 10_000,
            tolerance: 1e-12,
            balance_tolerance: 1e-11,
            max_balance_steps: 60,
        }
    }
}

/// A solved equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    pub p: DVector<f64>,
    pub w: DVector<f64>,
    pub q: DVector<f64>,
    pub pbar: DMatrix<f64>,
    /// Gross output quantities.
    pub y: DVector<f64>,
    /// Household consumption quantities.
    pub consumption: DVector<f64>,
    /// Sales over household expenditure.
    pub lambda: DVector<f64>,
    /// Nominal sales `P * Y`.
    pub sales: DVector<f64>,
    /// Household expenditure, equal to labor income.
    pub expenditure: f64,
    /// Log deviation of real consumption from the base year.
    pub gdp: f64,
    /// Shares at the solution; `nx` is in the same units as `sales`.
    pub shares: ShareSystem,
    pub iterations: usize,
    pub fixed_point_residual: f64,
    pub residuals: EquilibriumResiduals,
}

impl EquilibriumState {
    /// Largest independent equilibrium-condition violation.
    pub fn max_residual(&self) -> f64 {
        self.residuals.max()
    }
}

struct Evaluation {
    idx: CostIndices,
    shares: ShareSystem,
    sales: DVector<f64>,
    log_p_next: DVector<f64>,
    log_w_next: DVector<f64>,
}

/// One application of the fixed-point map with expenditure equal to one.
fn evaluate(
    model: &CalibratedModel,
    shock: &Shock,
    log_p: &DVector<f64>,
    log_w: &DVector<f64>,
) -> Result<Evaluation, EquilibriumError> {
    let n = model.n_sectors();
    let p = log_p.map(f64::exp);
    let w = log_w.map(f64::exp);
    let idx = unit_cost_indices(model, &p, &w, shock)?;
    let shares = share_system(model, &p, &w, shock, &idx);

    // Market clearing in values: S = A'S + a0 + NX.
    let system = DMatrix::identity(n, n) - shares.a.transpose();
    let sales = system
        .lu()
        .solve(&(&shares.a0 + &shares.nx))
        .ok_or(EquilibriumError::SingularMarketClearing)?;
    if let Some(i) = sales.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(EquilibriumError::NegativeSales {
            sector: model.economy.codes()[i].clone(),
            value: sales[i],
        });
    }

    let sigma = model.elasticities.sigma;
    let log_p_next = idx.p_implied.map(f64::ln);
    // Labor FOC: W = P Z^(1 - 1/sigma) (gamma Y / L)^(1/sigma), Y = S / P.
    let log_w_next = DVector::from_fn(n, |i, _| {
        if model.gamma[i] == 0.0 || model.labor[i] == 0.0 {
            return 0.0;
        }
        let y = sales[i] / p[i];
        log_p[i]
            + (1.0 - 1.0 / sigma) * shock.z[i].ln()
            + (model.gamma[i] * y / model.labor[i]).ln() / sigma
    });
    Ok(Evaluation {
        idx,
        shares,
        sales,
        log_p_next,
        log_w_next,
    })
}

struct FrameSolution {
    log_p: DVector<f64>,
    log_w: DVector<f64>,
    ev: Evaluation,
    residual: f64,
}

fn iterate(
    model: &CalibratedModel,
    shock: &Shock,
    mut log_p: DVector<f64>,
    mut log_w: DVector<f64>,
    opts: &SolverOptions,
    budget: &mut usize,
) -> Result<FrameSolution, EquilibriumError> {
    let mut alpha = opts.damping;
    let mut prev = f64::INFINITY;
    let mut residual = f64::INFINITY;
    while *budget > 0 {
        *budget -= 1;
        let ev = evaluate(model, shock, &log_p, &log_w)?;
        let dp = &ev.log_p_next - &log_p;
        let dw = &ev.log_w_next - &log_w;
        residual = dp.amax().max(dw.amax());
        if !residual.is_finite() {
            break;
        }
        if residual < opts.tolerance {
            return Ok(FrameSolution {
                log_p,
                log_w,
                ev,
                residual,
            });
        }
        if residual > prev {
            alpha = (alpha * 0.5).max(opts.min_damping);
        }
        prev = residual;
        log_p += dp * alpha;
        log_w += dw * alpha;
    }
    Err(EquilibriumError::NotConverged {
        iterations: opts.max_iterations,
        residual,
    })
}

/// `log(labor income)` in the numeraire frame; zero under balanced trade.
fn imbalance(sol: &FrameSolution) -> f64 {
    sol.ev.shares.labor.dot(&sol.ev.sales).ln()
}

pub fn solve_equilibrium(
    model: &CalibratedModel,
    shock: &Shock,
) -> Result<EquilibriumState, EquilibriumError> {
    solve_equilibrium_with(model, shock, &SolverOptions::default())
}

pub fn solve_equilibrium_with(
    model: &CalibratedModel,
    shock: &Shock,
    opts: &SolverOptions,
) -> Result<EquilibriumState, EquilibriumError> {
    let n = model.n_sectors();
    shock.validate(n)?;
    let mut budget = opts.max_iterations;
    let zeros = DVector::zeros(n);

    if !model.expenditure_endogenous() {
        let sol = iterate(model, shock, zeros.clone(), zeros, opts, &mut budget)?;
        return Ok(finish(model, shock, sol, 0.0, opts.max_iterations - budget));
    }

    let framed = |log_k: f64| Shock {
        e: shock.e * log_k.exp(),
        ..shock.clone()
    };
    // Secant iteration on log k, bracketing once a sign change is seen.
    let mut k0 = 0.0;
    let mut sol0 = iterate(model, &framed(k0), zeros.clone(), zeros, opts, &mut budget)?;
    let mut g0 = imbalance(&sol0);
    if g0.abs() < opts.balance_tolerance {
        return Ok(finish(model, shock, sol0, k0, opts.max_iterations - budget));
    }
    let mut k1 = -g0;
    let warm = |s: &FrameSolution, dk: f64| (s.log_p.add_scalar(dk), s.log_w.add_scalar(dk));
    let (p1, w1) = warm(&sol0, k1 - k0);
    let mut sol1 = iterate(model, &framed(k1), p1, w1, opts, &mut budget)?;
    let mut g1 = imbalance(&sol1);
    let mut bracket: Option<(f64, f64, f64, f64)> = None;
    for _ in 0..opts.max_balance_steps {
        if g1.abs() < opts.balance_tolerance {
            return Ok(finish(model, shock, sol1, k1, opts.max_iterations - budget));
        }
        if g0.signum() != g1.signum() {
            bracket = Some((k0, g0, k1, g1));
        }
        let mut next = if g1 != g0 {
            k1 - g1 * (k1 - k0) / (g1 - g0)
        } else {
            k1 - g1
        };
        if let Some((a, ga, b, gb)) = bracket {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if !(next > lo && next < hi) {
                next = a - ga * (b - a) / (gb - ga);
            }
        }
        let (p, w) = warm(&sol1, next - k1);
        let sol = iterate(model, &framed(next), p, w, opts, &mut budget)?;
        k0 = k1;
        g0 = g1;
        sol0 = sol1;
        k1 = next;
        sol1 = sol;
        g1 = imbalance(&sol1);
    }
    drop(sol0);
    Err(EquilibriumError::NotConverged {
        iterations: opts.max_iterations - budget,
        residual: g1.abs(),
    })
}

/// Maps a numeraire-frame solution at exchange rate `exp(log_k) * E` back to
/// the units of the original shock.
fn finish(
    model: &CalibratedModel,
    shock: &Shock,
    sol: FrameSolution,
    log_k: f64,
    iterations: usize,
) -> EquilibriumState {
    let scale = (-log_k).exp();
    let p = sol.log_p.map(|v| (v - log_k).exp());
    let w = sol.log_w.map(|v| (v - log_k).exp());
    let ev = sol.ev;
    let frame_p = sol.log_p.map(f64::exp);
    let y = ev.sales.component_div(&frame_p);
    let consumption = DVector::from_fn(p.len(), |j, _| ev.shares.a0[j] / frame_p[j]);
    let mut shares = ev.shares;
    shares.nx *= scale;
    shares.consumption_price *= scale;
    let mut state = EquilibriumState {
        lambda: ev.sales.clone(),
        sales: ev.sales * scale,
        q: ev.idx.q * scale,
        pbar: ev.idx.pbar * scale,
        y,
        consumption,
        expenditure: scale,
        gdp: 0.0,
        shares,
        iterations,
        fixed_point_residual: sol.residual,
        residuals: EquilibriumResiduals::default(),
        p,
        w,
    };
    state.gdp = real_gdp(&state, model);
    state.residuals = check_equilibrium(model, shock, &state);
    state
}

/// Log of the household consumption aggregate; zero at the base year.
pub fn real_gdp(state: &EquilibriumState, model: &CalibratedModel) -> f64 {
    let nu = model.elasticities.nu;
    let pairs = model
        .beta
        .iter()
        .zip(state.consumption.iter())
        .filter(|(b, _)| **b > 0.0);
    if (nu - 1.0).abs() < UNIT_ELASTICITY_TOL {
        pairs.map(|(b, c)| b * (c / b).ln()).sum()
    } else {
        let r = (nu - 1.0) / nu;
        let s: f64 = pairs.map(|(b, c)| b.powf(1.0 / nu) * c.powf(r)).sum();
        s.ln() / r
    }
}
