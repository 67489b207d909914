//! Derivative-free bounded minimization by Powell's conjugate-direction
//! method.
//!
//! Bounds are handled in the line search: each search is restricted to the
//! segment of the line that stays inside the box, and the segment ends are
//! evaluated exactly so minima on a bound are found without penalties.

use std::cell::Cell;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("x0 has {found} coordinates but the bounds have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("lower bound exceeds upper bound in coordinate {0}")]
    EmptyBox(usize),
    #[error("objective is not finite at the starting point")]
    NonFiniteStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowellOptions {
    /// Stop when a full sweep improves the objective by less than this
    /// fraction.
    pub rel_tol: f64,
    /// Stop once the objective falls below this value.
    pub abs_tol: f64,
    pub max_evals: usize,
    /// Absolute tolerance of each line search, in units of the direction.
    pub line_tol: f64,
}

impl Default for PowellOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-30,
            max_evals: 200_000,
            line_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowellResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    /// False when the evaluation budget ran out first.
    pub converged: bool,
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`, which is
/// clamped into the box. Infinite bounds are allowed.
pub fn powell_minimize<F>(
    f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &PowellOptions,
) -> Result<PowellResult, OptimizeError>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    for len in [lower.len(), upper.len()] {
        if len != n {
            return Err(OptimizeError::DimensionMismatch {
                expected: len,
                found: n,
            });
        }
    }
    if let Some(k) = (0..n).find(|&k| lower[k] > upper[k]) {
        return Err(OptimizeError::EmptyBox(k));
    }
    let evals = Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let clamp = |x: &mut [f64]| {
        for k in 0..n {
            x[k] = x[k].clamp(lower[k], upper[k]);
        }
    };

    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut fx = eval(&x);
    if !fx.is_finite() {
        return Err(OptimizeError::NonFiniteStart);
    }
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut d = vec![0.0; n];
            d[k] = 1.0;
            d
        })
        .collect();

    let search = |x: &mut Vec<f64>, fx: &mut f64, d: &[f64]| {
        let (tmin, tmax) = feasible_interval(x, d, lower, upper);
        if tmax - tmin <= 0.0 {
            return;
        }
        let point = |t: f64| -> Vec<f64> {
            let mut y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
            clamp(&mut y);
            y
        };
        let (t, ft) = line_minimize(|t| eval(&point(t)), tmin, tmax, *fx, opts.line_tol);
        if ft < *fx {
            *x = point(t);
            *fx = ft;
        }
    };

    let done = |f_start: f64, f_end: f64| {
        f_end < opts.abs_tol
            || 2.0 * (f_start - f_end) <= opts.rel_tol * (f_start.abs() + f_end.abs())
    };
    loop {
        if evals.get() >= opts.max_evals {
            return Ok(PowellResult {
                x,
                f: fx,
                n_evals: evals.get(),
                converged: false,
            });
        }
        let x_start = x.clone();
        let f_start = fx;
        let mut biggest = (0usize, 0.0f64);
        for (k, d) in dirs.iter().enumerate() {
            let before = fx;
            search(&mut x, &mut fx, d);
            if before - fx > biggest.1 {
                biggest = (k, before - fx);
            }
        }
        if done(f_start, fx) {
            return Ok(PowellResult {
                x,
                f: fx,
                n_evals: evals.get(),
                converged: true,
            });
        }
        // Try the net displacement of the sweep as a new direction.
        let d: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let mut x_ext: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        clamp(&mut x_ext);
        let f_ext = eval(&x_ext);
        if f_ext < f_start {
            let delta = biggest.1;
            let (s1, s2) = (f_start - fx - delta, f_start - f_ext);
            let t = 2.0 * (f_start - 2.0 * fx + f_ext) * s1 * s1 - delta * s2 * s2;
            if t < 0.0 {
                search(&mut x, &mut fx, &d);
                dirs.remove(biggest.0);
                dirs.push(d);
            }
        }
    }
}

/// Range of `t` keeping `x + t d` inside the box.
fn feasible_interval(x: &[f64], d: &[f64], lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..x.len() {
        if d[k] == 0.0 {
            continue;
        }
        let a = (lower[k] - x[k]) / d[k];
        let b = (upper[k] - x[k]) / d[k];
        tmin = tmin.max(a.min(b));
        tmax = tmax.min(a.max(b));
    }
    (tmin.min(0.0), tmax.max(0.0))
}

/// Minimizes `g` on `[tmin, tmax]` given `g(0) = g0`. Brackets by step
/// doubling from a unit step, then refines with bounded Brent.
fn line_minimize<G: Fn(f64) -> f64>(g: G, tmin: f64, tmax: f64, g0: f64, tol: f64) -> (f64, f64) {
    let step = 1.0f64;
    let mut best = (0.0, g0);
    let mut dir = 1.0;
    let mut b = step.min(tmax);
    let mut fb = if b > 0.0 { g(b) } else { f64::INFINITY };
    if fb >= g0 {
        let bn = (-step).max(tmin);
        let fbn = if bn < 0.0 { g(bn) } else { f64::INFINITY };
        if fbn >= g0 {
            // The minimum is bracketed by the two probes.
            let lo = if bn < 0.0 { bn } else { 0.0 };
            let hi = if b > 0.0 { b } else { 0.0 };
            if hi - lo <= 0.0 {
                return best;
            }
            let (t, ft) = brent_bounded(&g, lo, hi, tol);
            return if ft < best.1 { (t, ft) } else { best };
        }
        dir = -1.0;
        b = bn;
        fb = fbn;
    }
    // Walk downhill in `dir`, doubling, until the objective rises or the
    // bound is reached.
    let limit = if dir > 0.0 { tmax } else { tmin };
    let mut a = 0.0;
    loop {
        if fb < best.1 {
            best = (b, fb);
        }
        if b == limit {
            // Minimum may be on the bound; refine between a and the bound.
            let (lo, hi) = if dir > 0.0 { (a, b) } else { (b, a) };
            let (t, ft) = brent_bounded(&g, lo, hi, tol);
            return if ft < best.1 { (t, ft) } else { best };
        }
        let c = if dir > 0.0 {
            (b + 2.0 * (b - a)).min(limit)
        } else {
            (b + 2.0 * (b - a)).max(limit)
        };
        let fc = g(c);
        if fc > fb || !fc.is_finite() {
            let (lo, hi) = if dir > 0.0 { (a, c) } else { (c, a) };
            let (t, ft) = brent_bounded(&g, lo, hi, tol);
            return if ft < best.1 { (t, ft) } else { best };
        }
        a = b;
        b = c;
        fb = fc;
    }
}

/// Brent's bounded scalar minimization on `[a, b]` combining golden-section
/// steps with parabolic interpolation.
fn brent_bounded<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, xatol: f64) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let sqrt_eps = f64::EPSILON.sqrt();
    let sign = |v: f64| if v >= 0.0 { 1.0 } else { -1.0 };
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = g(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..500 {
        let xm = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xatol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = tol1 * sign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = x + if d.abs() >= tol1 { d } else { tol1 * sign(d) };
        let fu = g(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
