//! Calibrates the nested-CES model to the fixture's base year and solves it
//! exactly at the base point and after a productivity shock.
//!
//! ```text
//! cargo run --example calibrate_and_solve
//! ```

use std::path::Path;

use nalgebra::DVector;
use prodnet::economy::{Economy, Elasticities};
use prodnet::equilibrium::{calibrate, check_equilibrium, solve_equilibrium, Shock};
use prodnet::ingest::{build_panel, build_snapshot, read_fixture_dir, PanelOptions, TableCodes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_sector");
    let (tables, _) = read_fixture_dir(&dir, &TableCodes::default())?;
    let build = build_panel(&tables, &PanelOptions::default())?;
    let snapshot = build_snapshot(&tables, 2022, &build.tradeable)?;
    let economy = Economy::new(
        tables.industries.clone(),
        tables.labels.clone(),
        build.tradeable,
    )?;
    let el = Elasticities::new(0.6, vec![0.3, 0.8, 1.4], 1.5, 0.6);

    for open in [false, true] {
        let model = calibrate(&economy, &snapshot, &el, open)?;
        let base = solve_equilibrium(&model, &Shock::base(3))?;
        println!("{} economy", if open { "open" } else { "closed" });
        println!(
            "  base prices {:.6}, residual {:.1e}",
            base.p.transpose(),
            base.max_residual()
        );

        // Manufacturing productivity falls by 10%.
        let shock = Shock::productivity(DVector::from_vec(vec![1.0, 0.9, 1.0]));
        let s = solve_equilibrium(&model, &shock)?;
        let residuals = check_equilibrium(&model, &shock, &s);
        println!("  prices after the shock {:.4}", s.p.transpose());
        println!("  sales shares {:.4}", s.lambda.transpose());
        println!("  log real GDP change {:.5}", s.gdp);
        println!(
            "  max residual {:.1e} after {} iterations",
            residuals.max(),
            s.iterations
        );
    }
    Ok(())
}
