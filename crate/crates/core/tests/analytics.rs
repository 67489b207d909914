use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use prodnet::analytics::{
    first_order_response, gdp_second_order, reduced_form_check, AnalyticsError,
};
use prodnet::economy::Elasticities;
use prodnet::equilibrium::{solve_equilibrium, CalibratedModel, EquilibriumState, Shock};
use prodnet::synthetic::{random_model, EconomySpec};

fn model(n: usize, open: bool, sigma: f64, theta: f64, seed: u64) -> CalibratedModel {
    let el = Elasticities::uniform(n, sigma, theta, 1.8, 0.7);
    let spec = if open {
        EconomySpec::open(n, 2)
    } else {
        EconomySpec::closed(n)
    };
    random_model(seed, &spec, &el, open).unwrap()
}

fn solve_logs(
    m: &CalibratedModel,
    dz: &DVector<f64>,
    dpt: &DVector<f64>,
    de: f64,
    h: f64,
) -> EquilibriumState {
    solve_equilibrium(m, &Shock::from_logs(&(dz * h), &(dpt * h), de * h)).unwrap()
}

/// Central differences of the solved equilibrium along a shock direction.
fn check_against_finite_differences(
    m: &CalibratedModel,
    dz: DVector<f64>,
    dpt: DVector<f64>,
    de: f64,
) {
    let n = m.n_sectors();
    let base = solve_equilibrium(m, &Shock::base(n)).unwrap();
    let resp = first_order_response(m, &base, &dz, &dpt, de).unwrap();
    assert!(resp.residual < 1e-12);
    let h = 1e-5;
    let up = solve_logs(m, &dz, &dpt, de, h);
    let dn = solve_logs(m, &dz, &dpt, de, -h);
    let d = |a: f64, b: f64| (a - b) / (2.0 * h);
    for i in 0..n {
        assert_abs_diff_eq!(
            resp.dlog_p[i],
            d(up.p[i].ln(), dn.p[i].ln()),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            resp.dlog_w[i],
            d(up.w[i].ln(), dn.w[i].ln()),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            resp.dlambda[i],
            d(up.lambda[i], dn.lambda[i]),
            epsilon = 1e-6
        );
    }
    assert_abs_diff_eq!(
        resp.dlog_expenditure,
        d(up.expenditure.ln(), dn.expenditure.ln()),
        epsilon = 1e-6
    );
    assert_abs_diff_eq!(resp.dlog_gdp, d(up.gdp, dn.gdp), epsilon = 1e-6);
}

#[test]
fn closed_economy_response_matches_finite_differences() {
    let m = model(5, false, 0.6, 0.3, 4);
    check_against_finite_differences(
        &m,
        DVector::from_vec(vec![1.0, -0.5, 0.2, 0.0, 0.7]),
        DVector::zeros(5),
        0.0,
    );
}

#[test]
fn open_economy_productivity_response_matches_finite_differences() {
    let m = model(5, true, 0.6, 0.3, 9);
    check_against_finite_differences(
        &m,
        DVector::from_vec(vec![0.3, 1.0, -0.4, 0.0, 0.2]),
        DVector::zeros(5),
        0.0,
    );
}

#[test]
fn open_economy_import_price_response_matches_finite_differences() {
    let m = model(4, true, 0.8, 0.5, 12);
    check_against_finite_differences(
        &m,
        DVector::zeros(4),
        DVector::from_vec(vec![1.0, 0.5, 0.0, 0.0]),
        0.0,
    );
}

#[test]
fn exchange_rate_response_matches_finite_differences() {
    let m = model(4, true, 0.8, 0.5, 14);
    check_against_finite_differences(&m, DVector::zeros(4), DVector::zeros(4), 1.0);
}

#[test]
fn exchange_rate_is_a_pure_nominal_shock() {
    let m = model(4, true, 0.6, 0.4, 2);
    let base = solve_equilibrium(&m, &Shock::base(4)).unwrap();
    let resp =
        first_order_response(&m, &base, &DVector::zeros(4), &DVector::zeros(4), 1.0).unwrap();
    for i in 0..4 {
        assert_abs_diff_eq!(resp.dlog_p[i], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(resp.dlambda[i], 0.0, epsilon = 1e-10);
    }
    assert_abs_diff_eq!(resp.dlog_gdp, 0.0, epsilon = 1e-10);
}

#[test]
fn closed_economy_gdp_response_is_sales_weighted_productivity() {
    // Hulten: to first order dlog GDP = sum_i lambda_i dlog Z_i.
    let m = model(5, false, 0.5, 0.2, 6);
    let base = solve_equilibrium(&m, &Shock::base(5)).unwrap();
    let dz = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05, 0.0]);
    let resp = first_order_response(&m, &base, &dz, &DVector::zeros(5), 0.0).unwrap();
    assert_abs_diff_eq!(resp.dlog_gdp, base.lambda.dot(&dz), epsilon = 1e-12);
    assert_abs_diff_eq!(resp.dlog_expenditure, 0.0);
}

#[test]
fn cobb_douglas_sales_shares_do_not_move() {
    let m = model(4, false, 1.0, 1.0, 3);
    let base = solve_equilibrium(&m, &Shock::base(4)).unwrap();
    let dz = DVector::from_vec(vec![0.4, -0.1, 0.2, 0.3]);
    let el = Elasticities::uniform(4, 1.0, 1.0, 1.8, 1.0);
    let m = m.with_elasticities(el).unwrap();
    let resp = first_order_response(&m, &base, &dz, &DVector::zeros(4), 0.0).unwrap();
    assert!(resp.dlambda.amax() < 1e-12);
}

#[test]
fn second_order_gdp_error_is_third_order() {
    let m = model(4, false, 0.4, 0.2, 10);
    let base = solve_equilibrium(&m, &Shock::base(4)).unwrap();
    let err = |dz: f64| {
        let mut z = DVector::from_element(4, 1.0);
        z[1] = dz.exp();
        let exact = solve_equilibrium(&m, &Shock::productivity(z)).unwrap().gdp;
        (gdp_second_order(&m, &base, 1, dz).unwrap() - exact).abs()
    };
    let (e1, e2) = (err(0.02), err(0.01));
    assert!(e1 < 1e-5, "{e1}");
    // Halving the shock cuts a cubic error by about eight.
    assert!(e1 / e2 > 6.0, "{e1} {e2}");
}

#[test]
fn reduced_form_matches_solved_share_changes() {
    let m = model(5, true, 0.6, 0.4, 21);
    let n = 5;
    let base = solve_equilibrium(&m, &Shock::base(n)).unwrap();
    let dz = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, -0.4]);
    let dpt = DVector::from_vec(vec![0.6, -0.3, 0.0, 0.0, 0.0]);
    let h = 1e-5;
    let up = solve_logs(&m, &dz, &dpt, 0.0, h);
    let dn = solve_logs(&m, &dz, &dpt, 0.0, -h);
    let dlog_p = (up.p.map(f64::ln) - dn.p.map(f64::ln)) / (2.0 * h);
    let log_phi = |s: &EquilibriumState| s.shares.phi.map(f64::ln);
    let dlog_phi: DMatrix<f64> = (log_phi(&up) - log_phi(&dn)) / (2.0 * h);
    let predicted = reduced_form_check(&m, &base, &dlog_p, &dlog_phi).unwrap();
    let log_dom = |s: &EquilibriumState| s.shares.omega.component_mul(&s.shares.phi).map(f64::ln);
    let actual = (log_dom(&up) - log_dom(&dn)) / (2.0 * h);
    assert!((predicted - actual).amax() < 1e-6);
}

#[test]
fn unit_armington_elasticity_is_rejected() {
    assert!(Elasticities::uniform(3, 0.6, 0.3, 1.0, 0.7)
        .validate(3)
        .is_err());
    let mut m = model(3, true, 0.6, 0.3, 1);
    let base = solve_equilibrium(&m, &Shock::base(3)).unwrap();
    m.elasticities.xi = 1.0;
    let r = reduced_form_check(&m, &base, &DVector::zeros(3), &DMatrix::zeros(3, 3));
    assert_eq!(r, Err(AnalyticsError::UnitArmington));
}

#[test]
fn response_table_has_one_row_per_sector() {
    let m = model(3, false, 0.6, 0.3, 1);
    let base = solve_equilibrium(&m, &Shock::base(3)).unwrap();
    let resp = first_order_response(
        &m,
        &base,
        &DVector::from_element(3, 0.1),
        &DVector::zeros(3),
        0.0,
    )
    .unwrap();
    let mut buf = Vec::new();
    resp.write_csv(&m.economy, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("sector,dlog_p,dlog_w,dlambda"));
}

#[test]
fn wrong_shock_length_is_a_dimension_error() {
    let m = model(3, false, 0.6, 0.3, 1);
    let base = solve_equilibrium(&m, &Shock::base(3)).unwrap();
    assert!(matches!(
        first_order_response(&m, &base, &DVector::zeros(2), &DVector::zeros(3), 0.0),
        Err(AnalyticsError::Core(_))
    ));
}
