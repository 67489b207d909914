//! Input-output matrix and Leontief inverse of a small economy.
//!
//! ```text
//! cargo run --example leontief
//! ```

use nalgebra::{DMatrix, DVector};
use prodnet::economy::{build_io_matrix, check_invertible, leontief_inverse};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Rows purchase from columns.
    let omega = DMatrix::from_row_slice(3, 3, &[0.2, 0.5, 0.3, 0.4, 0.1, 0.5, 0.3, 0.3, 0.4]);
    // The first good is partly imported.
    let phi = DMatrix::from_row_slice(3, 3, &[0.7, 1.0, 1.0, 0.6, 1.0, 1.0, 0.8, 1.0, 1.0]);
    let gamma = DVector::from_vec(vec![0.45, 0.55, 0.6]);

    let a = build_io_matrix(&omega, &phi, &gamma)?;
    let rho = check_invertible(&a)?;
    println!("domestic input-output matrix:{a:.4}");
    println!("spectral radius in [{:.6}, {:.6}]", rho.lower, rho.upper);

    let l = leontief_inverse(&a)?;
    println!("Leontief inverse:{l:.4}");

    // Total requirements of a unit of final demand for each good.
    let ones = DVector::from_element(3, 1.0);
    println!(
        "output multipliers: {:.4}",
        (l.transpose() * ones).transpose()
    );
    Ok(())
}
