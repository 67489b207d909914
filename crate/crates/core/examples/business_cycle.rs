//! Monte Carlo sectoral business cycles drawn from the fixture's
//! productivity covariance, solved under every calibration.
//!
//! ```text
//! cargo run --release --example business_cycle -- [draws] [seed] [workers]
//! ```

use std::path::Path;

use prodnet::economy::{Economy, Elasticities};
use prodnet::equilibrium::calibrate;
use prodnet::ingest::{
    build_panel, build_snapshot, read_fixture_dir, tfp_covariance, PanelOptions, TableCodes,
};
use prodnet::shocks::{business_cycle_experiment, calibration_variants, with_workers};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let draws: usize = args.next().map_or(Ok(1000), |a| a.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |a| a.parse())?;
    let workers: usize = args.next().map_or(Ok(4), |a| a.parse())?;

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_sector");
    let (tables, tfp) = read_fixture_dir(&dir, &TableCodes::default())?;
    let build = build_panel(&tables, &PanelOptions::default())?;
    let snapshot = build_snapshot(&tables, 2022, &build.tradeable)?;
    let economy = Economy::new(
        tables.industries.clone(),
        tables.labels.clone(),
        build.tradeable,
    )?;
    let cov = tfp_covariance(&tfp.ok_or("fixture has no tfp.csv")?, 4, true)?;

    let theta = vec![0.3, 0.8, 1.4];
    let el = Elasticities::new(0.6, theta.clone(), 1.5, 0.6);
    let base = calibrate(&economy, &snapshot, &el, true)?;
    let models = calibration_variants(&base, &theta, 0.6)?;

    let report = with_workers(workers, || {
        business_cycle_experiment(&models, &cov.cov, draws, seed)
    })??;
    report.write_summary_csv(std::io::stdout())?;
    println!();
    report.write_prices_csv(std::io::stdout())?;
    for (name, h) in report.calibrations.iter().zip(report.histograms(12)) {
        println!("\n{name}");
        for (k, c) in h.counts.iter().enumerate() {
            println!("{:+.3} {}", h.edges[k], "#".repeat(c * 60 / draws.max(1)));
        }
    }
    Ok(())
}
