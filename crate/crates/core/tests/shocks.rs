use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use prodnet::economy::Elasticities;
use prodnet::equilibrium::calibrate;
use prodnet::shocks::{
    business_cycle_experiment, calibration_variants, foreign_price_experiment, mvn_sample,
    severe_tfp_experiment, with_workers, NamedModel, ShockError,
};
use prodnet::synthetic::{consistent_snapshot, random_model, synthetic_economy, EconomySpec};

fn variants(n: usize, open: bool, seed: u64) -> Vec<NamedModel> {
    let el = Elasticities::uniform(n, 0.6, 0.5, 1.5, 0.6);
    let spec = if open {
        EconomySpec::open(n, 2)
    } else {
        EconomySpec::closed(n)
    };
    let base = random_model(seed, &spec, &el, open).unwrap();
    let theta: Vec<f64> = (0..n).map(|i| 0.1 + 0.3 * i as f64).collect();
    calibration_variants(&base, &theta, 0.29).unwrap()
}

#[test]
fn variants_differ_only_in_theta() {
    let v = variants(4, true, 1);
    let names: Vec<&str> = v.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["main", "uniform", "cobb_douglas"]);
    assert_eq!(v[1].model.elasticities.theta, vec![0.29; 4]);
    assert_eq!(v[2].model.elasticities.theta, vec![1.0; 4]);
    assert_eq!(v[0].model.omega, v[2].model.omega);
    assert_eq!(v[0].model.elasticities.sigma, v[2].model.elasticities.sigma);
}

#[test]
fn import_shock_without_import_exposure_moves_nothing() {
    // Sector 0 is flagged tradeable but every purchaser buys it domestically.
    let n = 3;
    let snapshot = consistent_snapshot(
        2024,
        DMatrix::from_row_slice(n, n, &[0.5, 0.3, 0.2, 0.2, 0.5, 0.3, 0.3, 0.3, 0.4]),
        DMatrix::from_element(n, n, 1.0),
        DVector::from_vec(vec![0.5, 0.6, 0.4]),
        DVector::from_vec(vec![0.3, 0.3, 0.4]),
    )
    .unwrap();
    let economy = synthetic_economy(n, 0)
        .with_tradeable(vec![true, false, false])
        .unwrap();
    let el = Elasticities::uniform(n, 0.6, 0.4, 1.5, 0.6);
    let model = calibrate(&economy, &snapshot, &el, true).unwrap();
    let models = calibration_variants(&model, &[0.2, 0.4, 0.6], 0.3).unwrap();
    let r = foreign_price_experiment(&models, 0.25, n).unwrap();
    assert_eq!(r.rows.len(), n);
    for row in &r.rows {
        assert_eq!(row.shocked, "S0");
        for v in &row.responses {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn import_shock_raises_prices_and_reports_top_k() {
    let models = variants(5, true, 3);
    let r = foreign_price_experiment(&models, 0.25, 2).unwrap();
    assert!(r.failures.is_empty());
    // Two tradeable sectors, two responders each.
    assert_eq!(r.rows.len(), 4);
    assert!(r.rows[0].responses[0] >= r.rows[1].responses[0]);
    assert_eq!(r.rows[0].rank, 1);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("shocked,sector,rank,main,uniform,cobb_douglas,main_minus_uniform"));
}

#[test]
fn import_experiment_needs_open_calibrations() {
    let models = variants(3, false, 3);
    assert!(matches!(
        foreign_price_experiment(&models, 0.25, 2),
        Err(ShockError::ClosedEconomy(_))
    ));
}

#[test]
fn zero_magnitude_severe_shock_is_all_zero() {
    let models = variants(4, true, 5);
    let r = severe_tfp_experiment(&models, 0.0).unwrap();
    assert_eq!(r.rows.len(), 4);
    for row in &r.rows {
        for g in &row.dlog_gdp {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn severe_shock_lowers_gdp_and_ranks_by_difference() {
    let models = variants(4, false, 6);
    let r = severe_tfp_experiment(&models, -0.25).unwrap();
    assert!(r
        .rows
        .iter()
        .all(|row| row.dlog_gdp.iter().all(|g| *g < 0.0)));
    for pair in r.rows.windows(2) {
        assert!(pair[0].difference.abs() >= pair[1].difference.abs());
    }
}

#[test]
fn zero_covariance_business_cycle_is_the_base() {
    let models = variants(3, true, 7);
    let r = business_cycle_experiment(&models, &DMatrix::zeros(3, 3), 20, 1).unwrap();
    for s in &r.gdp {
        assert_abs_diff_eq!(s.mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.sd, 0.0, epsilon = 1e-12);
        assert_eq!(s.skewness, 0.0);
    }
    assert!(r.dropped.is_empty());
}

#[test]
fn cobb_douglas_business_cycle_is_hulten_linear() {
    let n = 4;
    let el = Elasticities::uniform(n, 1.0, 1.0, 1.5, 1.0);
    let model = random_model(8, &EconomySpec::closed(n), &el, false).unwrap();
    let lambda = model.base_output.clone();
    let models = vec![NamedModel {
        name: "cd".into(),
        model,
    }];
    let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![0.01, 0.02, 0.005, 0.01]));
    let (draws, seed) = (400, 9);
    let r = business_cycle_experiment(&models, &cov, draws, seed).unwrap();
    let linear: Vec<f64> = mvn_sample(&cov, draws, seed)
        .unwrap()
        .iter()
        .map(|z| lambda.dot(z))
        .collect();
    for (g, l) in r.gdp_draws[0].iter().zip(&linear) {
        assert_abs_diff_eq!(*g, *l, epsilon = 1e-9);
    }
    let mc_se = r.gdp[0].sd / (draws as f64).sqrt();
    assert!(r.gdp[0].mean.abs() < 3.0 * mc_se);
}

#[test]
fn business_cycle_is_independent_of_worker_count() {
    let models = variants(4, true, 10);
    let cov = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.010, 0.002, 0.000, 0.001, 0.002, 0.008, 0.001, 0.000, 0.000, 0.001, 0.012, 0.003,
            0.001, 0.000, 0.003, 0.009,
        ],
    );
    let run = |w| {
        with_workers(w, || {
            business_cycle_experiment(&models, &cov, 60, 42).unwrap()
        })
        .unwrap()
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(8));
    let mut a = Vec::new();
    let mut b = Vec::new();
    one.write_summary_csv(&mut a).unwrap();
    run(3).write_summary_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let hist = one.histograms(10);
    assert_eq!(hist.len(), 3);
    assert!(hist.iter().all(|h| h.counts.iter().sum::<usize>() == 60));
}

#[test]
fn mismatched_covariance_dimension_is_rejected() {
    let models = variants(3, true, 11);
    assert!(matches!(
        business_cycle_experiment(&models, &DMatrix::zeros(2, 2), 5, 1),
        Err(ShockError::Dimension { .. })
    ));
}
