//! Reads the bundled three-sector tables and builds the estimation panel,
//! a base-year share snapshot and the productivity-shock covariance.
//!
//! ```text
//! cargo run --example ingest_fixtures
//! ```

use std::path::Path;

use prodnet::economy::validate_snapshot;
use prodnet::ingest::{
    build_household_panel, build_panel, build_snapshot, read_fixture_dir, tfp_covariance,
    PanelOptions, TableCodes,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_sector");
    let (tables, tfp) = read_fixture_dir(&dir, &TableCodes::default())?;
    let years = tables.year_list();
    println!(
        "{} industries, years {:?}..={:?}",
        tables.n_industries(),
        years.first(),
        years.last()
    );

    let build = build_panel(&tables, &PanelOptions::default())?;
    let r = build.report;
    println!(
        "panel: {} candidates, {} below the share floor, {} non-finite, {} kept",
        r.candidates, r.dropped_low_share, r.dropped_nonfinite, r.kept
    );
    for (code, t) in tables.industries.iter().zip(&build.tradeable) {
        println!("  {code}: {}", if *t { "tradeable" } else { "domestic" });
    }
    let (household, hr) = build_household_panel(&tables, 0.01)?;
    println!(
        "household panel: {} observations ({} kept of {})",
        household.len(),
        hr.kept,
        hr.candidates
    );

    let base = *years.last().unwrap();
    let snapshot = build_snapshot(&tables, base, &build.tradeable)?;
    println!("{base} labor shares: {:.3}", snapshot.gamma.transpose());
    println!("{base} household shares: {:.3}", snapshot.a0.transpose());
    println!(
        "snapshot violations: {}",
        validate_snapshot(&snapshot).len()
    );

    if let Some(tfp) = tfp {
        let cov = tfp_covariance(&tfp, 4, true)?;
        println!(
            "4-year log TFP covariance from {} differences:{:.5}",
            cov.n_differences, cov.cov
        );
    }
    Ok(())
}
