//! Supply/Use/Import tables to share snapshots, estimation panels and a
//! productivity-shock covariance.

mod bea;
mod panel;
mod shares;
mod tables;
mod tfp;

pub use bea::{fetch_bea_tables, BeaConfig, BeaTable, API_KEY_ENV};
pub use panel::{
    build_household_panel, build_panel, read_household_csv, read_panel_csv, write_household_csv,
    write_panel_csv, FilterReport, HouseholdObservation, PanelBuild, PanelObservation,
    PanelOptions,
};
pub use shares::{
    build_snapshot, classify_tradeable, compute_expenditure_shares, compute_import_ratios,
    household_shares,
};
pub use tables::{
    read_fixture_dir, ImportRow, LabelRow, PriceRow, RawRecords, SupplyRow, SupplyUseTables,
    TableCodes, TfpPanel, TfpRow, UseRow, YearTables,
};
pub use tfp::{clip_to_psd, tfp_covariance, TfpCovariance};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing input file {0}")]
    MissingFile(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {detail}")]
    Parse { file: String, detail: String },
    #[error("{file}: year {year} is missing")]
    MissingYear { file: String, year: i32 },
    #[error("prices.csv: no index for industry {industry} in year {year}")]
    MissingPrice { year: i32, industry: String },
    #[error("{file}: unknown industry code {code:?}")]
    UnknownIndustry { file: String, code: String },
    #[error("commodity {commodity} has zero total supply but positive use in {year}")]
    ZeroSupply { commodity: String, year: i32 },
    #[error("year {0} is not in the tables")]
    UnknownYear(i32),
    #[error("need at least {needed} years, found {found}")]
    InsufficientYears { needed: usize, found: usize },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("environment variable {0} is not set and no cache is available")]
    MissingApiKey(String),
    #[error("response schema: field {field:?} {detail}")]
    Schema { field: String, detail: String },
    #[error(transparent)]
    Core(#[from] crate::economy::CoreError),
}
