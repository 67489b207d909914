//! Sector-specific substitution elasticities in production networks:
//! input-output accounting, GMM estimation of nested-CES elasticities,
//! equilibrium calibration and shock propagation.

pub mod analytics;
pub mod cli;
pub mod economy;
pub mod equilibrium;
pub mod estimation;
pub mod ingest;
pub mod optimize;
pub mod serde_matrix;
pub mod shocks;
pub mod synthetic;
