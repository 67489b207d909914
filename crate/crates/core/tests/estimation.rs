use approx::assert_abs_diff_eq;
use nalgebra::DVector;
use prodnet::economy::Elasticities;
use prodnet::equilibrium::CalibratedModel;
use prodnet::estimation::{
    estimate, estimate_household_nu, gmm_objective, moment_conditions, residualize,
    sandwich_variance, write_estimates_csv, EstimationError, EstimationMode,
};
use prodnet::ingest::{HouseholdObservation, PanelObservation};
use prodnet::synthetic::{random_model, reduced_form_panel, EconomySpec, PanelSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const THETA: [f64; 3] = [0.2, 0.8, 1.5];

fn model(theta: &[f64], xi: f64) -> CalibratedModel {
    let n = theta.len();
    let el = Elasticities::new(0.6, theta.to_vec(), xi, 0.6);
    random_model(5, &EconomySpec::open(n, n), &el, true).unwrap()
}

fn panel(theta: &[f64], noise_sd: f64, seed: u64) -> Vec<PanelObservation> {
    let spec = PanelSpec {
        noise_sd,
        ..Default::default()
    };
    reduced_form_panel(&model(theta, 1.5), &spec, seed).unwrap()
}

#[test]
fn residualized_groups_sum_to_zero_and_demeaning_is_idempotent() {
    let raw = panel(&THETA, 0.01, 1);
    let rp = residualize(&raw, 3).unwrap();
    let mut sums = vec![[0.0f64; 3]; rp.n_groups];
    for (o, g) in rp.observations.iter().zip(&rp.group) {
        sums[*g][0] += o.dlog_omega;
        sums[*g][1] += o.dlog_p;
        sums[*g][2] += o.dlog_phi;
    }
    assert!(sums.iter().flatten().all(|s| s.abs() < 1e-10));
    let again = residualize(&rp.observations, 3).unwrap();
    for (a, b) in again.observations.iter().zip(&rp.observations) {
        assert_abs_diff_eq!(a.dlog_omega, b.dlog_omega, epsilon = 1e-15);
        assert_abs_diff_eq!(a.dlog_phi, b.dlog_phi, epsilon = 1e-15);
    }
}

#[test]
fn noiseless_panel_has_zero_moments_at_truth() {
    let rp = residualize(&panel(&THETA, 0.0, 2), 3).unwrap();
    let theta = DVector::from_row_slice(&THETA);
    let m = moment_conditions(&theta, 1.5, &rp).unwrap();
    assert!(m.values.amax() < 1e-15);
    assert!(gmm_objective(&theta, 1.5, &rp).unwrap() < 1e-18);
    // Truth beats every point of a small grid around it.
    for dt in [-0.1, 0.0, 0.1] {
        for dx in [-0.2, 0.0, 0.2] {
            if dt == 0.0 && dx == 0.0 {
                continue;
            }
            let f = gmm_objective(&theta.add_scalar(dt), 1.5 + dx, &rp).unwrap();
            assert!(f > 1e-12);
        }
    }
}

#[test]
fn noiseless_panel_is_exactly_identified() {
    let rp = residualize(&panel(&THETA, 0.0, 3), 3).unwrap();
    let r = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    assert!(r.converged);
    for (a, b) in r.theta_hat.iter().zip(THETA) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
    }
    assert_abs_diff_eq!(r.xi_hat.unwrap(), 1.5, epsilon = 1e-6);
    assert!(r.objective_value < 1e-18);
    assert!(r.se_theta.unwrap().iter().all(|s| *s < 1e-6));
}

#[test]
fn noisy_panel_recovers_parameters_within_three_standard_errors() {
    let rp = residualize(&panel(&THETA, 0.01, 4), 3).unwrap();
    let r = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    let se = r.se_theta.clone().unwrap();
    for i in 0..3 {
        assert!((r.theta_hat[i] - THETA[i]).abs() < 3.0 * se[i], "{r:?}");
        assert!(se[i] > 0.0);
    }
    assert!((r.xi_hat.unwrap() - 1.5).abs() < 3.0 * r.se_xi.unwrap());
    assert_eq!(r.n_obs, rp.n_obs());
}

#[test]
fn sandwich_standard_errors_shrink_with_noise() {
    let rp = residualize(&panel(&THETA, 0.01, 4), 3).unwrap();
    let quiet = residualize(&panel(&THETA, 0.001, 4), 3).unwrap();
    let theta = DVector::from_row_slice(&THETA);
    let loud = sandwich_variance(&theta, 1.5, &rp).unwrap();
    let soft = sandwich_variance(&theta, 1.5, &quiet).unwrap();
    assert!(soft.se.iter().zip(loud.se.iter()).all(|(a, b)| a < b));
    assert_eq!(loud.covariance.shape(), (4, 4));
}

#[test]
fn uniform_mode_recovers_common_theta() {
    let rp = residualize(&panel(&[0.4; 4], 0.01, 6), 4).unwrap();
    let r = estimate(&rp, EstimationMode::Uniform).unwrap();
    let se = r.se_theta.as_ref().unwrap()[0];
    assert!((r.theta_hat[0] - 0.4).abs() < 3.0 * se, "{r:?}");
    assert!(r.theta_hat.iter().all(|t| *t == r.theta_hat[0]));
}

#[test]
fn biased_mode_equals_sector_specific_without_import_variation() {
    let closed: Vec<_> = panel(&THETA, 0.01, 7)
        .into_iter()
        .map(|o| PanelObservation { dlog_phi: 0.0, ..o })
        .collect();
    let rp = residualize(&closed, 3).unwrap();
    let main = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    let biased = estimate(&rp, EstimationMode::BiasedClosed).unwrap();
    for (a, b) in main.theta_hat.iter().zip(&biased.theta_hat) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
    }
    assert!(biased.xi_hat.is_none());
    // Without import variation xi is not identified.
    assert!(main.singular_variance);
    let theta = DVector::from_row_slice(&main.theta_hat);
    assert!(matches!(
        sandwich_variance(&theta, 1.5, &rp),
        Err(EstimationError::RankDeficient(_))
    ));
}

#[test]
fn tradeable_free_panel_has_zero_import_moments() {
    let closed: Vec<_> = panel(&THETA, 0.01, 7)
        .into_iter()
        .map(|o| PanelObservation { dlog_phi: 0.0, ..o })
        .collect();
    let rp = residualize(&closed, 3).unwrap();
    let m = moment_conditions(&DVector::from_row_slice(&THETA), 2.0, &rp).unwrap();
    for i in 0..3 {
        assert_eq!(m.values[2 * i + 1], 0.0);
    }
}

#[test]
fn negative_true_response_pins_theta_at_zero() {
    // theta = 0 truth with a strongly complementary panel lands on the bound.
    let rp = residualize(&panel(&[0.0, 0.5, 1.0], 0.0, 8), 3).unwrap();
    let r = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    assert!(r.theta_hat[0].abs() < 1e-6);
    assert!(r.theta_hat.iter().all(|t| *t >= 0.0));
}

#[test]
fn empty_sector_is_an_error_in_sector_specific_mode() {
    let raw: Vec<_> = panel(&THETA, 0.01, 9)
        .into_iter()
        .filter(|o| o.i != 1)
        .collect();
    let rp = residualize(&raw, 3).unwrap();
    assert_eq!(
        estimate(&rp, EstimationMode::SectorSpecific).unwrap_err(),
        EstimationError::EmptySector(1)
    );
    assert_eq!(
        moment_conditions(&DVector::from_element(3, 0.5), 2.0, &rp)
            .unwrap()
            .empty_sectors,
        vec![1]
    );
}

#[test]
fn multistart_is_deterministic() {
    let rp = residualize(&panel(&THETA, 0.01, 10), 3).unwrap();
    let a = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    let b = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    assert_eq!(a, b);
}

#[test]
fn estimates_table_lists_sectors_then_uniform_and_armington() {
    let rp = residualize(&panel(&THETA, 0.01, 11), 3).unwrap();
    let main = estimate(&rp, EstimationMode::SectorSpecific).unwrap();
    let biased = estimate(&rp, EstimationMode::BiasedClosed).unwrap();
    let uniform = estimate(&rp, EstimationMode::Uniform).unwrap();
    let codes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let mut buf = Vec::new();
    write_estimates_csv(&codes, &main, Some(&biased), Some(&uniform), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "code,estimate,se,biased_estimate,biased_se");
    assert_eq!(lines.len(), 6);
    assert!(lines[4].starts_with("uniform,"));
    assert!(lines[5].starts_with("armington,"));
    let json = serde_json::to_string(&main).unwrap();
    assert_eq!(
        serde_json::from_str::<prodnet::estimation::EstimationResult>(&json).unwrap(),
        main
    );
}

fn household_panel(nu: f64, noise_sd: f64, seed: u64) -> Vec<HouseholdObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let price = Normal::new(0.0, 0.05).unwrap();
    let noise = Normal::new(0.0, noise_sd).unwrap();
    let mut out = Vec::new();
    for t in 0..25 {
        let year_effect = price.sample(&mut rng);
        for j in 0..8 {
            let p = price.sample(&mut rng);
            out.push(HouseholdObservation {
                j,
                t,
                dlog_share: (1.0 - nu) * p + year_effect + noise.sample(&mut rng),
                dlog_p: p,
            });
        }
    }
    out
}

#[test]
fn household_nu_is_recovered() {
    let h = estimate_household_nu(&household_panel(0.5, 0.01, 1)).unwrap();
    assert!((h.nu_hat - 0.5).abs() < 3.0 * h.se.unwrap(), "{h:?}");
    assert!(!h.degenerate);
    let exact = estimate_household_nu(&household_panel(0.5, 0.0, 1)).unwrap();
    assert_abs_diff_eq!(exact.nu_hat, 0.5, epsilon = 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn moments_ignore_group_constants(shift in prop::collection::vec(-1.0f64..1.0, 3), seed in 0u64..100) {
        let raw = panel(&THETA, 0.01, seed);
        let shifted: Vec<_> = raw
            .iter()
            .map(|o| {
                let c = shift[o.i] * (1.0 + o.t as f64 * 0.01);
                PanelObservation { dlog_omega: o.dlog_omega + c, dlog_p: o.dlog_p - c, dlog_phi: o.dlog_phi + 2.0 * c, ..*o }
            })
            .collect();
        let theta = DVector::from_row_slice(&THETA);
        let a = moment_conditions(&theta, 1.8, &residualize(&raw, 3).unwrap()).unwrap();
        let b = moment_conditions(&theta, 1.8, &residualize(&shifted, 3).unwrap()).unwrap();
        prop_assert!((a.values - b.values).amax() < 1e-12);
    }

    #[test]
    fn objective_is_nonnegative(theta in prop::collection::vec(0.0f64..3.0, 3), xi in 1.01f64..10.0) {
        let rp = residualize(&panel(&THETA, 0.01, 1), 3).unwrap();
        prop_assert!(gmm_objective(&DVector::from_vec(theta), xi, &rp).unwrap() >= 0.0);
    }
}
