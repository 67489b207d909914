//! GMM estimation on a panel simulated from a calibrated model with known
//! elasticities, under the three estimation modes.
//!
//! ```text
//! cargo run --release --example estimate_synthetic
//! ```

use prodnet::economy::Elasticities;
use prodnet::estimation::{estimate, residualize, write_estimates_csv, EstimationMode};
use prodnet::synthetic::{random_model, reduced_form_panel, EconomySpec, PanelSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let theta = vec![0.0, 0.3, 0.8, 1.2, 2.0, 0.5];
    let xi = 1.5;
    let n = theta.len();
    let el = Elasticities::new(0.6, theta.clone(), xi, 0.6);
    let model = random_model(1, &EconomySpec::open(n, n), &el, true)?;
    let panel = reduced_form_panel(&model, &PanelSpec::default(), 7)?;
    let rp = residualize(&panel, n)?;
    println!(
        "{} observations after removing purchaser-year means",
        rp.n_obs()
    );

    let main = estimate(&rp, EstimationMode::SectorSpecific)?;
    let uniform = estimate(&rp, EstimationMode::Uniform)?;
    let biased = estimate(&rp, EstimationMode::BiasedClosed)?;

    let se = main.se_theta.clone().unwrap_or_default();
    println!("sector  truth  estimate  se");
    for (i, (truth, est)) in theta.iter().zip(&main.theta_hat).enumerate() {
        println!(
            "{i:>6}  {truth:5.2}  {est:8.4}  {:.4}",
            se.get(i).copied().unwrap_or(f64::NAN)
        );
    }
    println!(
        "xi: truth {xi}, estimate {:.4} (se {:.4})",
        main.xi_hat.unwrap(),
        main.se_xi.unwrap_or(f64::NAN)
    );
    println!(
        "objective {:.3e}, start {}, {} evaluations",
        main.objective_value, main.start_index, main.n_evals
    );

    let codes: Vec<String> = model.economy.codes().to_vec();
    println!();
    write_estimates_csv(
        &codes,
        &main,
        Some(&biased),
        Some(&uniform),
        std::io::stdout(),
    )?;
    Ok(())
}
