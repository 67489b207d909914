//! Sector registry, input-output snapshots and the share accounting identities.
//!
//! Matrices are oriented with rows indexing the purchasing industry `i` and
//! columns the supplying input `j`, so `omega[(i, j)]` is industry `i`'s
//! spending on composite input `j` as a fraction of its intermediate spend.

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_matrix;

/// Shares below this magnitude are stored as exact zeros.
pub const SHARE_ZERO: f64 = 1e-14;

/// Tolerance used by [`validate_snapshot`] for the accounting identities.
pub const IDENTITY_TOL: f64 = 1e-10;

const POWER_ITER_CAP: usize = 1000;
const POWER_ITER_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("matrix is not Leontief-invertible: spectral radius bound {upper:.6} >= 1")]
    NotInvertible { upper: f64 },
    #[error("spectral radius could not be resolved below 1 (bracket [{lower:.3e}, {upper:.3e}])")]
    SpectralRadiusUnresolved { lower: f64, upper: f64 },
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),
    #[error("invalid elasticities: {0}")]
    InvalidElasticities(String),
}

/// The sector registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EconomyRepr", into = "EconomyRepr")]
pub struct Economy {
    codes: Vec<String>,
    labels: Vec<String>,
    tradeable: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct EconomyRepr {
    codes: Vec<String>,
    labels: Vec<String>,
    tradeable: Vec<bool>,
}

impl TryFrom<EconomyRepr> for Economy {
    type Error = CoreError;
    fn try_from(r: EconomyRepr) -> Result<Self, CoreError> {
        Economy::new(r.codes, r.labels, r.tradeable)
    }
}

impl From<Economy> for EconomyRepr {
    fn from(e: Economy) -> Self {
        EconomyRepr {
            codes: e.codes,
            labels: e.labels,
            tradeable: e.tradeable,
        }
    }
}

impl Economy {
    pub fn new(
        codes: Vec<String>,
        labels: Vec<String>,
        tradeable: Vec<bool>,
    ) -> Result<Self, CoreError> {
        if codes.is_empty() {
            return Err(CoreError::InvalidEconomy("no sectors".into()));
        }
        let n = codes.len();
        if labels.len() != n {
            return Err(CoreError::DimensionMismatch {
                what: "labels",
                expected: n,
                found: labels.len(),
            });
        }
        if tradeable.len() != n {
            return Err(CoreError::DimensionMismatch {
                what: "tradeable",
                expected: n,
                found: tradeable.len(),
            });
        }
        let mut seen = HashSet::new();
        for c in &codes {
            if !seen.insert(c.as_str()) {
                return Err(CoreError::InvalidEconomy(format!("duplicate code {c:?}")));
            }
        }
        Ok(Self {
            codes,
            labels,
            tradeable,
        })
    }

    /// Economy whose labels equal its codes and with no tradeable sector.
    pub fn from_codes<S: Into<String>>(
        codes: impl IntoIterator<Item = S>,
    ) -> Result<Self, CoreError> {
        let codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        let n = codes.len();
        Self::new(codes.clone(), codes, vec![false; n])
    }

    pub fn n_sectors(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tradeable(&self) -> &[bool] {
        &self.tradeable
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    pub fn with_tradeable(mut self, tradeable: Vec<bool>) -> Result<Self, CoreError> {
        if tradeable.len() != self.codes.len() {
            return Err(CoreError::DimensionMismatch {
                what: "tradeable",
                expected: self.codes.len(),
                found: tradeable.len(),
            });
        }
        self.tradeable = tradeable;
        Ok(self)
    }
}

/// One year of input-output accounts expressed as shares.
///
/// `lambda` and `nx` are in units of aggregate consumption expenditure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IOSnapshot {
    pub year: i32,
    #[serde(with = "serde_matrix::matrix")]
    pub omega: DMatrix<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub phi: DMatrix<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub gamma: DVector<f64>,
    #[serde(with = "serde_matrix::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub a0: DVector<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub lambda: DVector<f64>,
    #[serde(with = "serde_matrix::vector")]
    pub nx: DVector<f64>,
}

impl IOSnapshot {
    /// Builds a snapshot from its primitive shares, deriving the IO matrix.
    pub fn from_shares(
        year: i32,
        omega: DMatrix<f64>,
        phi: DMatrix<f64>,
        gamma: DVector<f64>,
        a0: DVector<f64>,
        lambda: DVector<f64>,
        nx: DVector<f64>,
    ) -> Result<Self, CoreError> {
        let omega = omega.map(clean_share);
        let phi = phi.map(clean_share);
        let gamma = gamma.map(clean_share);
        let a0 = a0.map(clean_share);
        let a = build_io_matrix(&omega, &phi, &gamma)?;
        let n = omega.nrows();
        for (what, len) in [("a0", a0.len()), ("lambda", lambda.len()), ("nx", nx.len())] {
            if len != n {
                return Err(CoreError::DimensionMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        Ok(Self {
            year,
            omega,
            phi,
            gamma,
            a,
            a0,
            lambda,
            nx,
        })
    }

    pub fn n_sectors(&self) -> usize {
        self.omega.nrows()
    }
}

/// Structural elasticities of the nested-CES economy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elasticities {
    /// Labor / intermediate-bundle elasticity.
    pub sigma: f64,
    /// Intermediate-input elasticity per purchasing sector.
    pub theta: Vec<f64>,
    /// Armington elasticity between domestic and imported varieties.
    pub xi: f64,
    /// Household elasticity across sectoral goods.
    pub nu: f64,
    /// Foreign demand elasticity for exports.
    pub xi_export: f64,
}

impl Elasticities {
    /// Export elasticity tied to the Armington elasticity.
    pub fn new(sigma: f64, theta: Vec<f64>, xi: f64, nu: f64) -> Self {
        Self {
            sigma,
            theta,
            xi,
            nu,
            xi_export: xi,
        }
    }

    pub fn uniform(n: usize, sigma: f64, theta: f64, xi: f64, nu: f64) -> Self {
        Self::new(sigma, vec![theta; n], xi, nu)
    }

    pub fn validate(&self, n_sectors: usize) -> Result<(), CoreError> {
        if self.theta.len() != n_sectors {
            return Err(CoreError::DimensionMismatch {
                what: "theta",
                expected: n_sectors,
                found: self.theta.len(),
            });
        }
        let scalars = [
            ("sigma", self.sigma),
            ("xi", self.xi),
            ("nu", self.nu),
            ("xi_export", self.xi_export),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(CoreError::InvalidElasticities(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if let Some((i, t)) = self
            .theta
            .iter()
            .enumerate()
            .find(|(_, t)| !(t.is_finite() && **t >= 0.0))
        {
            return Err(CoreError::InvalidElasticities(format!(
                "theta[{i}] must be finite and nonnegative, got {t}"
            )));
        }
        if self.xi == 1.0 {
            return Err(CoreError::InvalidElasticities(
                "xi = 1 makes the import-ratio coefficient singular".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
pub fn clean_share(x: f64) -> f64 {
    if x.abs() < SHARE_ZERO {
        0.0
    } else {
        x
    }
}

/// `a_ij = (1 - gamma_i) * omega_ij * phi_ij`.
pub fn build_io_matrix(
    omega: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    gamma: &DVector<f64>,
) -> Result<DMatrix<f64>, CoreError> {
    let n = omega.nrows();
    if omega.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            what: "omega columns",
            expected: n,
            found: omega.ncols(),
        });
    }
    if phi.shape() != (n, n) {
        return Err(CoreError::DimensionMismatch {
            what: "phi",
            expected: n,
            found: phi.nrows(),
        });
    }
    if gamma.len() != n {
        return Err(CoreError::DimensionMismatch {
            what: "gamma",
            expected: n,
            found: gamma.len(),
        });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        (1.0 - gamma[i]) * omega[(i, j)] * phi[(i, j)]
    }))
}

/// Collatz-Wielandt bracket on the spectral radius of a square matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRadius {
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
}

impl SpectralRadius {
    pub fn estimate(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// `Some(true)` when the bracket certifies a radius below one,
    /// `Some(false)` when it certifies one at or above, `None` otherwise.
    pub fn below_one(&self) -> Option<bool> {
        if self.upper < 1.0 {
            Some(true)
        } else if self.lower >= 1.0 || (self.converged && self.estimate() >= 1.0) {
            Some(false)
        } else {
            None
        }
    }
}

/// Brackets the spectral radius of `|a|` (an upper bound for that of `a`).
///
/// Power iteration runs on `|a| + I`, whose Perron root is strictly dominant;
/// the min/max ratios `(Bx)_i / x_i` bound the Perron root from both sides.
pub fn spectral_radius(a: &DMatrix<f64>) -> SpectralRadius {
    let n = a.nrows();
    let b = DMatrix::from_fn(n, n, |i, j| {
        a[(i, j)].abs() + if i == j { 1.0 } else { 0.0 }
    });
    let mut x = DVector::from_element(n, 1.0);
    let mut lower = 0.0;
    let mut upper = f64::INFINITY;
    for _ in 0..POWER_ITER_CAP {
        let y = &b * &x;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let r = y[i] / x[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lower = f64::max(lower, lo - 1.0);
        upper = f64::min(upper, hi - 1.0);
        if upper - lower <= POWER_ITER_TOL * upper.abs().max(1.0) {
            return SpectralRadius {
                lower,
                upper,
                converged: true,
            };
        }
        let scale = y.max();
        x = y / scale;
    }
    SpectralRadius {
        lower,
        upper,
        converged: false,
    }
}

/// Certifies `rho(a) < 1`, returning the bracket on success.
pub fn check_invertible(a: &DMatrix<f64>) -> Result<SpectralRadius, CoreError> {
    let rho = spectral_radius(a);
    match rho.below_one() {
        Some(true) => Ok(rho),
        Some(false) => Err(CoreError::NotInvertible { upper: rho.upper }),
        None => Err(CoreError::SpectralRadiusUnresolved {
            lower: rho.lower,
            upper: rho.upper,
        }),
    }
}

/// `Psi = (I - a)^{-1}`.
pub fn leontief_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>, CoreError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CoreError::DimensionMismatch {
            what: "leontief input columns",
            expected: n,
            found: a.ncols(),
        });
    }
    let rho = check_invertible(a)?;
    let m = DMatrix::identity(n, n) - a;
    m.lu()
        .try_inverse()
        .ok_or(CoreError::NotInvertible { upper: rho.upper })
}

/// One broken snapshot invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Dimension {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    NonFinite {
        field: &'static str,
        row: usize,
        col: usize,
    },
    NegativeShare {
        field: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    ShareAboveOne {
        field: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    OmegaRowSum {
        row: usize,
        sum: f64,
    },
    IoIdentity {
        row: usize,
        col: usize,
        expected: f64,
        found: f64,
    },
    ConsumptionSum {
        sum: f64,
    },
    NotInvertible {
        lower: f64,
        upper: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension {
                field,
                expected,
                found,
            } => write!(
                f,
                "dimension: {field} has size {found}, expected {expected}"
            ),
            Violation::NonFinite { field, row, col } => {
                write!(f, "finite: {field}[{row},{col}] is not finite")
            }
            Violation::NegativeShare {
                field,
                row,
                col,
                value,
            } => write!(f, "nonnegative: {field}[{row},{col}] = {value}"),
            Violation::ShareAboveOne {
                field,
                row,
                col,
                value,
            } => write!(f, "at most one: {field}[{row},{col}] = {value}"),
            Violation::OmegaRowSum { row, sum } => {
                write!(f, "omega row sum: row {row} sums to {sum}")
            }
            Violation::IoIdentity {
                row,
                col,
                expected,
                found,
            } => write!(
                f,
                "io identity: a[{row},{col}] = {found}, (1-gamma)*omega*phi = {expected}"
            ),
            Violation::ConsumptionSum { sum } => write!(f, "consumption shares sum to {sum}"),
            Violation::NotInvertible { lower, upper } => write!(
                f,
                "leontief invertibility: spectral radius in [{lower}, {upper}] not below 1"
            ),
        }
    }
}

fn check_entries(
    field: &'static str,
    m: &DMatrix<f64>,
    at_most_one: bool,
    out: &mut Vec<Violation>,
) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !v.is_finite() {
                out.push(Violation::NonFinite {
                    field,
                    row: i,
                    col: j,
                });
            } else if v < 0.0 {
                out.push(Violation::NegativeShare {
                    field,
                    row: i,
                    col: j,
                    value: v,
                });
            } else if at_most_one && v > 1.0 + IDENTITY_TOL {
                out.push(Violation::ShareAboveOne {
                    field,
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
}

/// Lists every invariant the snapshot breaks; empty means valid.
pub fn validate_snapshot(s: &IOSnapshot) -> Vec<Violation> {
    let n = s.omega.nrows();
    let mut out = Vec::new();
    let dims: [(&'static str, usize, usize); 7] = [
        ("omega.cols", s.omega.ncols(), n),
        ("phi", s.phi.nrows().max(s.phi.ncols()), n),
        ("gamma", s.gamma.len(), n),
        ("a", s.a.nrows().max(s.a.ncols()), n),
        ("a0", s.a0.len(), n),
        ("lambda", s.lambda.len(), n),
        ("nx", s.nx.len(), n),
    ];
    for (field, found, expected) in dims {
        if found != expected {
            out.push(Violation::Dimension {
                field,
                expected,
                found,
            });
        }
    }
    if !out.is_empty() {
        return out;
    }

    check_entries("omega", &s.omega, true, &mut out);
    check_entries("phi", &s.phi, true, &mut out);
    check_entries(
        "gamma",
        &DMatrix::from_column_slice(n, 1, s.gamma.as_slice()),
        true,
        &mut out,
    );
    check_entries("a", &s.a, true, &mut out);
    check_entries(
        "a0",
        &DMatrix::from_column_slice(n, 1, s.a0.as_slice()),
        true,
        &mut out,
    );
    check_entries(
        "lambda",
        &DMatrix::from_column_slice(n, 1, s.lambda.as_slice()),
        false,
        &mut out,
    );
    check_entries(
        "nx",
        &DMatrix::from_column_slice(n, 1, s.nx.as_slice()),
        false,
        &mut out,
    );
    if !out.is_empty() {
        return out;
    }

    for i in 0..n {
        let sum: f64 = s.omega.row(i).sum();
        if sum != 0.0 && (sum - 1.0).abs() > IDENTITY_TOL {
            out.push(Violation::OmegaRowSum { row: i, sum });
        }
        for j in 0..n {
            let expected = (1.0 - s.gamma[i]) * s.omega[(i, j)] * s.phi[(i, j)];
            if (s.a[(i, j)] - expected).abs() > IDENTITY_TOL {
                out.push(Violation::IoIdentity {
                    row: i,
                    col: j,
                    expected,
                    found: s.a[(i, j)],
                });
            }
        }
    }
    let a0_sum = s.a0.sum();
    if (a0_sum - 1.0).abs() > IDENTITY_TOL {
        out.push(Violation::ConsumptionSum { sum: a0_sum });
    }
    let rho = spectral_radius(&s.a);
    if rho.below_one() != Some(true) {
        out.push(Violation::NotInvertible {
            lower: rho.lower,
            upper: rho.upper,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn neumann(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
        let n = a.nrows();
        let mut acc = DMatrix::identity(n, n);
        let mut pow = DMatrix::identity(n, n);
        for _ in 1..=terms {
            pow = &pow * a;
            acc += &pow;
        }
        acc
    }

    fn two_sector_snapshot() -> IOSnapshot {
        let omega = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.3, 0.7]);
        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 0.8, 1.0, 0.8]);
        let gamma = DVector::from_vec(vec![0.5, 0.4]);
        IOSnapshot::from_shares(
            2024,
            omega,
            phi,
            gamma,
            DVector::from_vec(vec![0.55, 0.45]),
            DVector::from_vec(vec![1.2, 1.1]),
            DVector::from_vec(vec![0.0, 0.1]),
        )
        .unwrap()
    }

    #[test]
    fn leontief_of_zero_is_identity() {
        let psi = leontief_inverse(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(psi, DMatrix::identity(3, 3));
    }

    #[test]
    fn leontief_scalar_geometric_series() {
        let psi = leontief_inverse(&DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert_abs_diff_eq!(psi[(0, 0)], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn leontief_matches_truncated_neumann_series() {
        let a = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.1]);
        let oracle = neumann(&a, 60);
        let psi = leontief_inverse(&a).unwrap();
        assert!((psi - oracle).abs().max() < 1e-10);
    }

    #[test]
    fn leontief_rejects_radius_above_one() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.5, 0.5, 0.6]);
        assert!(matches!(
            leontief_inverse(&a),
            Err(CoreError::NotInvertible { .. })
        ));
    }

    #[test]
    fn spectral_radius_of_reducible_matrix_is_certified() {
        // Triangular, so the min ratio never closes; the upper bound certifies.
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.0]);
        let rho = spectral_radius(&a);
        assert_eq!(rho.below_one(), Some(true));
        assert!(rho.upper >= 0.5 - 1e-12);
        assert!(leontief_inverse(&a).is_ok());
    }

    #[test]
    fn io_matrix_pure_labor_is_zero() {
        let omega = DMatrix::from_row_slice(2, 2, &[0.6, 0.4, 0.5, 0.5]);
        let a = build_io_matrix(
            &omega,
            &DMatrix::from_element(2, 2, 1.0),
            &DVector::from_element(2, 1.0),
        )
        .unwrap();
        assert_eq!(a, DMatrix::zeros(2, 2));
    }

    #[test]
    fn io_matrix_arithmetic() {
        let omega = DMatrix::from_row_slice(1, 2, &[0.6, 0.4]);
        let omega = omega.resize(2, 2, 0.0);
        let a = build_io_matrix(
            &omega,
            &DMatrix::from_element(2, 2, 1.0),
            &DVector::from_element(2, 0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(a[(0, 0)], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(0, 1)], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn io_matrix_dimension_mismatch() {
        let err = build_io_matrix(
            &DMatrix::zeros(2, 2),
            &DMatrix::zeros(3, 3),
            &DVector::zeros(2),
        );
        assert!(matches!(err, Err(CoreError::DimensionMismatch { .. })));
    }

    #[test]
    fn consistent_snapshot_has_no_violations() {
        assert!(validate_snapshot(&two_sector_snapshot()).is_empty());
    }

    #[test]
    fn omega_row_sum_violation_names_row() {
        let mut s = two_sector_snapshot();
        s.omega[(1, 0)] = 0.2;
        s.a = build_io_matrix(&s.omega, &s.phi, &s.gamma).unwrap();
        let v = validate_snapshot(&s);
        assert_eq!(v.len(), 1);
        match &v[0] {
            Violation::OmegaRowSum { row, sum } => {
                assert_eq!(*row, 1);
                assert_abs_diff_eq!(*sum, 0.9, epsilon = 1e-12);
            }
            other => panic!("unexpected violation {other}"),
        }
    }

    #[test]
    fn scaled_doubly_stochastic_is_not_invertible() {
        // Every row and column sums to 1.05, so the Perron root is exactly 1.05.
        let d =
            DMatrix::from_row_slice(3, 3, &[0.2, 0.3, 0.5, 0.5, 0.2, 0.3, 0.3, 0.5, 0.2]) * 1.05;
        let mut s = two_sector_snapshot();
        s.omega = DMatrix::from_element(3, 3, 1.0 / 3.0);
        s.phi = DMatrix::from_element(3, 3, 1.0);
        s.gamma = DVector::zeros(3);
        s.a0 = DVector::from_element(3, 1.0 / 3.0);
        s.lambda = DVector::from_element(3, 1.0);
        s.nx = DVector::zeros(3);
        s.a = d;
        let v = validate_snapshot(&s);
        assert!(v.iter().any(
            |x| matches!(x, Violation::NotInvertible { lower, .. } if (*lower - 1.05).abs() < 1e-9)
        ));
        let rho = spectral_radius(&s.a);
        assert!(rho.converged);
        assert_abs_diff_eq!(rho.estimate(), 1.05, epsilon = 1e-12);
    }

    #[test]
    fn snapshot_cleans_tiny_shares() {
        let mut omega = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        omega[(0, 1)] = 1e-16;
        let s = IOSnapshot::from_shares(
            2000,
            omega,
            DMatrix::from_element(2, 2, 1.0),
            DVector::from_element(2, 0.5),
            DVector::from_element(2, 0.5),
            DVector::from_element(2, 1.0),
            DVector::zeros(2),
        )
        .unwrap();
        assert_eq!(s.omega[(0, 1)], 0.0);
    }

    #[test]
    fn economy_rejects_duplicates_and_empty() {
        assert!(Economy::from_codes(Vec::<String>::new()).is_err());
        assert!(Economy::from_codes(["211", "211"]).is_err());
        let e = Economy::from_codes(["211", "324"]).unwrap();
        assert_eq!(e.index_of("324"), Some(1));
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<Economy>(&json).unwrap(), e);
        assert!(serde_json::from_str::<Economy>(
            r#"{"codes":["a","a"],"labels":["x","y"],"tradeable":[false,false]}"#
        )
        .is_err());
    }

    #[test]
    fn elasticities_reject_unit_armington() {
        let e = Elasticities::uniform(2, 0.6, 0.3, 1.0, 0.5);
        assert!(e.validate(2).is_err());
        let e = Elasticities::uniform(2, 0.6, 0.3, 1.4, 0.5);
        assert!(e.validate(2).is_ok());
        assert!(e.validate(3).is_err());
    }

    fn nonneg_matrix(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(0.0..1.0f64, n * n).prop_map(move |v| {
            let m = DMatrix::from_row_slice(n, n, &v);
            let max_row: f64 = (0..n).map(|i| m.row(i).sum()).fold(0.0, f64::max);
            // Row sums below 0.95 bound the spectral radius.
            if max_row > 0.0 {
                m * (0.95 / max_row)
            } else {
                m
            }
        })
    }

    proptest! {
        #[test]
        fn leontief_inverts_i_minus_a(a in nonneg_matrix(4)) {
            let psi = leontief_inverse(&a).unwrap();
            let prod = &psi * (DMatrix::identity(4, 4) - &a);
            prop_assert!((prod - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-10);
            let lower = DMatrix::identity(4, 4) + &a;
            for i in 0..4 { for j in 0..4 {
                prop_assert!(psi[(i, j)] >= lower[(i, j)] - 1e-12);
            }}
        }

        #[test]
        fn io_matrix_homogeneous_in_input_share(
            om in proptest::collection::vec(0.0..1.0f64, 9),
            ph in proptest::collection::vec(0.0..1.0f64, 9),
            g in proptest::collection::vec(0.0..1.0f64, 3),
            k in 0.0..1.0f64,
        ) {
            let omega = DMatrix::from_row_slice(3, 3, &om);
            let phi = DMatrix::from_row_slice(3, 3, &ph);
            let gamma = DVector::from_vec(g);
            let a = build_io_matrix(&omega, &phi, &gamma).unwrap();
            // Scaling (1 - gamma) by k scales a by k.
            let scaled_gamma = gamma.map(|x| 1.0 - k * (1.0 - x));
            let a_k = build_io_matrix(&omega, &phi, &scaled_gamma).unwrap();
            prop_assert!((a_k - a.clone() * k).abs().max() < 1e-14);
            for i in 0..3 {
                let direct: f64 = (0..3).map(|j| omega[(i, j)] * phi[(i, j)]).sum::<f64>() * (1.0 - gamma[i]);
                prop_assert!((a.row(i).sum() - direct).abs() < 1e-14);
            }
        }
    }
}
