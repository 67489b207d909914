//! Raises each tradeable sector's import price by 25% and compares domestic
//! price responses under sector-specific, common and unit elasticities.
//!
//! ```text
//! cargo run --example foreign_price_shock
//! ```

use prodnet::economy::Elasticities;
use prodnet::shocks::{calibration_variants, foreign_price_experiment};
use prodnet::synthetic::{random_model, EconomySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 6;
    let theta = vec![0.05, 0.2, 0.5, 0.9, 1.4, 2.0];
    let el = Elasticities::new(0.6, theta.clone(), 1.45, 0.6);
    let base = random_model(11, &EconomySpec::open(n, 2), &el, true)?;
    let models = calibration_variants(&base, &theta, 0.29)?;

    let report = foreign_price_experiment(&models, 0.25, 3)?;
    report.write_csv(std::io::stdout())?;
    for f in &report.failures {
        eprintln!("{} under {}: {}", f.scenario, f.calibration, f.error);
    }
    Ok(())
}
