//! Linearized propagation of shocks against the exact solver, and the
//! second-order GDP approximation.
//!
//! ```text
//! cargo run --example first_order_propagation
//! ```

use nalgebra::DVector;
use prodnet::analytics::{first_order_response, gdp_second_order};
use prodnet::economy::Elasticities;
use prodnet::equilibrium::{solve_equilibrium, Shock};
use prodnet::synthetic::{random_model, EconomySpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n = 5;
    let el = Elasticities::new(0.6, vec![0.1, 0.4, 0.8, 1.5, 2.5], 1.5, 0.6);
    let model = random_model(3, &EconomySpec::open(n, 2), &el, true)?;
    let base = solve_equilibrium(&model, &Shock::base(n))?;

    let dz = DVector::from_vec(vec![0.01, -0.02, 0.0, 0.005, 0.0]);
    let dpt = DVector::from_vec(vec![0.03, 0.0, 0.0, 0.0, 0.0]);
    let lin = first_order_response(&model, &base, &dz, &dpt, 0.0)?;
    let exact = solve_equilibrium(&model, &Shock::from_logs(&dz, &dpt, 0.0))?;
    println!("sector  dlogP linear  dlogP exact");
    for i in 0..n {
        println!(
            "{i:>6}  {:12.6}  {:11.6}",
            lin.dlog_p[i],
            exact.p[i].ln() - base.p[i].ln()
        );
    }
    println!(
        "dlog GDP: linear {:.6}, exact {:.6}",
        lin.dlog_gdp,
        exact.gdp - base.gdp
    );
    println!("dlambda: {:.6}", lin.dlambda.transpose());

    println!("\nsecond-order GDP response to a sector-1 productivity shock");
    let mut z = DVector::from_element(n, 1.0);
    for dlog_z in [-0.2, -0.1, 0.1, 0.2] {
        z[1] = f64::exp(dlog_z);
        let exact = solve_equilibrium(&model, &Shock::productivity(z.clone()))?;
        let approx = gdp_second_order(&model, &base, 1, dlog_z)?;
        let hulten = base.lambda[1] * dlog_z;
        println!(
            "dlogZ {dlog_z:+.2}: Hulten {hulten:+.6}, second order {approx:+.6}, exact {:+.6}",
            exact.gdp
        );
    }
    Ok(())
}
