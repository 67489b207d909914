//! Cuts each sector's productivity by 25%, one sector at a time, and ranks
//! sectors by how much the GDP loss depends on the elasticity calibration.
//!
//! ```text
//! cargo run --example severe_tfp
//! ```

use prodnet::economy::Elasticities;
use prodnet::shocks::{calibration_variants, severe_tfp_experiment};
use prodnet::synthetic::{random_model, EconomySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 6;
    let theta = vec![0.05, 0.2, 0.5, 0.9, 1.4, 2.0];
    let el = Elasticities::new(0.6, theta.clone(), 1.45, 0.6);
    for open in [true, false] {
        let spec = if open {
            EconomySpec::open(n, 2)
        } else {
            EconomySpec::closed(n)
        };
        let base = random_model(11, &spec, &el, open)?;
        let models = calibration_variants(&base, &theta, 0.29)?;
        let report = severe_tfp_experiment(&models, -0.25)?;
        println!("{} economy", if open { "open" } else { "closed" });
        report.write_csv(std::io::stdout())?;
        println!();
    }
    Ok(())
}
