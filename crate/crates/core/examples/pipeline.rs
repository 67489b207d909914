//! The full command-line pipeline on the bundled fixture, run in-process
//! into a temporary directory.
//!
//! ```text
//! cargo run --example pipeline
//! ```

use std::path::Path;

use prodnet::cli::main_with_args;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_sector");
    let out = tempfile::tempdir()?;
    let config = out.path().join("run.toml");
    std::fs::write(&config, "[scenarios.business_cycle]\nn_draws = 200\n")?;
    for cmd in ["ingest", "estimate", "calibrate", "simulate", "report"] {
        let code = main_with_args([
            "prodnet",
            cmd,
            "--config",
            config.to_str().unwrap(),
            "--fixtures",
            fixtures.to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
            "--seed",
            "1",
        ]);
        if code != 0 {
            return Err(format!("{cmd} exited with {code}").into());
        }
    }
    Ok(())
}
