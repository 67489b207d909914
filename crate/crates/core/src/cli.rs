//! Batch pipeline behind the `prodnet` binary: ingest, estimate, calibrate,
//! simulate and report.
//!
//! Stages communicate only through files under the output directory, so any
//! stage can be rerun on its own. Every CSV starts with a `#` provenance line
//! and every JSON artifact is wrapped as `{"provenance": .., "data": ..}`.
//!
//! Exit codes: 0 success, 2 data or input error, 3 estimation failure,
//! 4 solver failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::economy::{CoreError, Economy, Elasticities, IOSnapshot};
use crate::equilibrium::{calibrate, solve_equilibrium, CalibratedModel, EquilibriumError, Shock};
use crate::estimation::{
    estimate, estimate_household_nu, residualize, write_estimates_csv, EstimationError,
    EstimationMode, EstimationResult, HouseholdEstimate,
};
use crate::ingest::{
    build_household_panel, build_panel, build_snapshot, fetch_bea_tables, read_fixture_dir,
    read_household_csv, read_panel_csv, tfp_covariance, write_household_csv, write_panel_csv,
    BeaConfig, FilterReport, IngestError, PanelOptions, SupplyUseTables, TableCodes, TfpCovariance,
    TfpPanel,
};
use crate::shocks::{
    business_cycle_experiment, calibration_variants, foreign_price_experiment,
    severe_tfp_experiment, with_workers, BusinessCycleReport, ForeignPriceReport, Histogram,
    NamedModel, SevereTfpReport, ShockError,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Calibration names in report order.
pub const CALIBRATIONS: [&str; 3] = ["main", "uniform", "cobb_douglas"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {detail}")]
    Config { path: String, detail: String },
    #[error("missing input {0}; run the earlier stage first")]
    MissingInput(PathBuf),
    #[error("cannot read {path}: {detail}")]
    BadInput { path: PathBuf, detail: String },
    #[error("cannot write {path}: {detail}")]
    Output { path: PathBuf, detail: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("no value for {0}: estimate it or set it under [elasticities]")]
    MissingElasticity(&'static str),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error("{mode} estimation did not converge (objective {objective:.3e}); pass --allow-nonconverged to keep it")]
    NotConverged { mode: &'static str, objective: f64 },
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Shock(#[from] ShockError),
    #[error("no scenario succeeded; see {0}")]
    AllScenariosFailed(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. }
            | Self::MissingInput(_)
            | Self::BadInput { .. }
            | Self::Output { .. }
            | Self::Ingest(_)
            | Self::Core(_)
            | Self::MissingElasticity(_) => 2,
            Self::Estimation(_) | Self::NotConverged { .. } => 3,
            Self::Equilibrium(_) | Self::Shock(_) | Self::AllScenariosFailed(_) => 4,
        }
    }
}

// ---- configuration ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Fixtures,
    Api,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Directory of CSV tables when `source = "fixtures"`.
    pub fixtures: PathBuf,
    /// Raw API responses are cached here.
    pub cache_dir: PathBuf,
    pub codes: TableCodes,
    pub api: BeaConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Fixtures,
            fixtures: PathBuf::from("fixtures/three_sector"),
            cache_dir: PathBuf::from("cache"),
            codes: TableCodes::default(),
            api: BeaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Calibration year; the latest year in the tables when unset.
    pub base_year: Option<i32>,
    /// Mean imported share above which a sector counts as tradeable.
    pub tradeable_threshold: f64,
    /// Purchaser-input pairs and household goods with a lower mean share are
    /// dropped from the panels.
    pub min_avg_share: f64,
    pub tfp_horizon_years: usize,
    /// Overlapping rather than disjoint productivity-growth windows.
    pub tfp_overlapping: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            base_year: None,
            tradeable_threshold: 0.25,
            min_avg_share: 0.01,
            tfp_horizon_years: 4,
            tfp_overlapping: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationConfig {
    pub modes: Vec<EstimationMode>,
    /// Also estimate the household elasticity.
    pub household: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            modes: vec![
                EstimationMode::SectorSpecific,
                EstimationMode::Uniform,
                EstimationMode::BiasedClosed,
            ],
            household: true,
        }
    }
}

/// Fixed elasticities; unset values come from the estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticityConfig {
    pub sigma: f64,
    pub theta: Option<Vec<f64>>,
    pub theta_uniform: Option<f64>,
    pub xi: Option<f64>,
    /// Defaults to `xi`.
    pub xi_export: Option<f64>,
    /// Defaults to the household estimate, else 1.
    pub nu: Option<f64>,
}

impl Default for ElasticityConfig {
    fn default() -> Self {
        Self {
            sigma: 0.6,
            theta: None,
            theta_uniform: None,
            xi: None,
            xi_export: None,
            nu: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForeignPriceConfig {
    pub enabled: bool,
    pub magnitude: f64,
    pub top_k: usize,
}

impl Default for ForeignPriceConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            magnitude: 0.25,
            top_k: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SevereTfpConfig {
    pub enabled: bool,
    pub magnitude: f64,
}

impl Default for SevereTfpConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            magnitude: -0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BusinessCycleConfig {
    pub enabled: bool,
    pub n_draws: usize,
    pub histogram_bins: usize,
}

impl Default for BusinessCycleConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            n_draws: 1000,
            histogram_bins: 40,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub foreign_price: ForeignPriceConfig,
    pub severe_tfp: SevereTfpConfig,
    pub business_cycle: BusinessCycleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for parallel stages; 0 uses every core.
    pub workers: usize,
    /// When false, no sector is tradeable and only closed-economy models are
    /// calibrated and simulated.
    pub open_economy: bool,
    pub data: DataConfig,
    pub ingest: IngestConfig,
    pub estimation: EstimationConfig,
    pub elasticities: ElasticityConfig,
    pub scenarios: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            workers: 0,
            open_economy: true,
            data: DataConfig::default(),
            ingest: IngestConfig::default(),
            estimation: EstimationConfig::default(),
            elasticities: ElasticityConfig::default(),
            scenarios: ScenarioConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            detail: e.to_string(),
        })
    }

    /// SHA-256 of the serialized config, in hex. The output directory does
    /// not change results and is left out.
    pub fn hash(&self) -> String {
        let located = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        hex::encode(Sha256::digest(located.to_toml().as_bytes()))
    }
}

// ---- command line ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "sector_specific")]
    SectorSpecific,
    Uniform,
    #[value(name = "biased", alias = "biased_closed")]
    Biased,
}

impl From<ModeArg> for EstimationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SectorSpecific => Self::SectorSpecific,
            ModeArg::Uniform => Self::Uniform,
            ModeArg::Biased => Self::BiasedClosed,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "prodnet",
    version,
    about = "Production-network elasticity estimation and shock simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Reads tables from this fixture directory instead of the API.
    #[arg(long, global = true)]
    pub fixtures: Option<PathBuf>,
    /// Runs a single estimation mode.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Treats the economy as closed.
    #[arg(long, global = true)]
    pub closed: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Keeps estimates whose optimizer hit its evaluation budget.
    #[arg(long, global = true)]
    pub allow_nonconverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build panels, share snapshots and the productivity covariance.
    Ingest,
    /// Estimate elasticities from the panels.
    Estimate,
    /// Calibrate models for every elasticity calibration.
    Calibrate,
    /// Run the configured shock experiments.
    Simulate,
    /// Collect the tables into report.md.
    Report,
}

impl Cli {
    /// Config file plus command-line overrides.
    pub fn effective_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.fixtures {
            cfg.data.source = DataSource::Fixtures;
            cfg.data.fixtures = dir.clone();
        }
        if let Some(mode) = self.mode {
            cfg.estimation.modes = vec![mode.into()];
        }
        if self.closed {
            cfg.open_economy = false;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = cli.effective_config()?;
    let ctx = Context::new(cfg, cli.allow_nonconverged);
    let name = match cli.command {
        Command::Ingest => "ingest",
        Command::Estimate => "estimate",
        Command::Calibrate => "calibrate",
        Command::Simulate => "simulate",
        Command::Report => "report",
    };
    ctx.write_text(&format!("config_{name}.toml"), &ctx.cfg.to_toml())?;
    let go = || match cli.command {
        Command::Ingest => cmd_ingest(&ctx),
        Command::Estimate => cmd_estimate(&ctx),
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Simulate => cmd_simulate(&ctx),
        Command::Report => cmd_report(&ctx).map(|text| print!("{text}")),
    };
    if ctx.cfg.workers > 0 {
        with_workers(ctx.cfg.workers, go)?
    } else {
        go()
    }
}

// ---- artifacts ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn header_line(&self) -> String {
        format!(
            "# {} {} config_hash={} seed={}\n",
            self.tool, self.version, self.config_hash, self.seed
        )
    }
}

#[derive(Serialize, Deserialize)]
struct Wrapped<T> {
    provenance: Provenance,
    data: T,
}

/// Where a calibrated elasticity came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    Configured,
    Estimated,
    Default,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub years: Vec<i32>,
    pub base_year: i32,
    pub panel: FilterReport,
    pub household: FilterReport,
    pub tradeable: Vec<String>,
    pub tfp_available: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub results: Vec<EstimationResult>,
    pub household: Option<HouseholdEstimate>,
}

impl Estimates {
    pub fn get(&self, mode: EstimationMode) -> Option<&EstimationResult> {
        self.results.iter().find(|r| r.mode == mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub base_year: i32,
    pub elasticities: Elasticities,
    pub theta_uniform: f64,
    pub sources: Vec<(String, ValueSource)>,
    pub models: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub economy: String,
    pub experiment: String,
    pub calibration: String,
    pub scenario: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomyResults {
    pub economy: String,
    pub foreign_price: Option<ForeignPriceReport>,
    pub severe_tfp: Option<SevereTfpReport>,
    pub business_cycle: Option<BusinessCycleReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub succeeded: usize,
    pub failed: usize,
    pub economies: Vec<EconomyResults>,
}

pub struct Context {
    pub cfg: RunConfig,
    pub provenance: Provenance,
    allow_nonconverged: bool,
}

impl Context {
    pub fn new(cfg: RunConfig, allow_nonconverged: bool) -> Self {
        let provenance = Provenance {
            tool: "prodnet".into(),
            version: VERSION.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        Self {
            cfg,
            provenance,
            allow_nonconverged,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(rel);
        let fail = |e: std::io::Error| CliError::Output {
            path: path.clone(),
            detail: e.to_string(),
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(fail)?;
        }
        fs::write(&path, bytes).map_err(fail)
    }

    pub fn write_text(&self, rel: &str, text: &str) -> Result<(), CliError> {
        self.write_bytes(rel, text.as_bytes())
    }

    /// Writes a CSV produced by `body` after the provenance line.
    pub fn write_csv(
        &self,
        rel: &str,
        body: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = self.provenance.header_line().into_bytes();
        body(&mut buf).map_err(|e| CliError::Output {
            path: self.path(rel),
            detail: e.to_string(),
        })?;
        self.write_bytes(rel, &buf)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, data: &T) -> Result<(), CliError> {
        let wrapped = Wrapped {
            provenance: self.provenance.clone(),
            data,
        };
        let mut text = serde_json::to_string_pretty(&wrapped).expect("artifact serializes");
        text.push('\n');
        self.write_text(rel, &text)
    }

    pub fn read_bytes(&self, rel: &str) -> Result<Vec<u8>, CliError> {
        let path = self.path(rel);
        if !path.exists() {
            return Err(CliError::MissingInput(path));
        }
        fs::read(&path).map_err(|e| CliError::BadInput {
            path,
            detail: e.to_string(),
        })
    }

    pub fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, CliError> {
        let bytes = self.read_bytes(rel)?;
        let wrapped: Wrapped<T> =
            serde_json::from_slice(&bytes).map_err(|e| CliError::BadInput {
                path: self.path(rel),
                detail: e.to_string(),
            })?;
        Ok(wrapped.data)
    }

    pub fn read_json_if_present<T: DeserializeOwned>(
        &self,
        rel: &str,
    ) -> Result<Option<T>, CliError> {
        if self.path(rel).exists() {
            self.read_json(rel).map(Some)
        } else {
            Ok(None)
        }
    }
}

fn economy_kinds(cfg: &RunConfig) -> &'static [&'static str] {
    if cfg.open_economy {
        &["open", "closed"]
    } else {
        &["closed"]
    }
}

fn model_path(name: &str, kind: &str) -> String {
    format!("models/{name}_{kind}.json")
}

// ---- ingest ----

fn load_tables(cfg: &RunConfig) -> Result<(SupplyUseTables, Option<TfpPanel>), CliError> {
    match cfg.data.source {
        DataSource::Fixtures => Ok(read_fixture_dir(&cfg.data.fixtures, &cfg.data.codes)?),
        DataSource::Api => {
            let tables = fetch_bea_tables(&cfg.data.api, &cfg.data.codes, &cfg.data.cache_dir)?;
            // Productivity series are not served by the API; a local tfp.csv
            // in the fixtures directory is used when present.
            let tfp_path = cfg.data.fixtures.join("tfp.csv");
            let tfp = if tfp_path.exists() {
                Some(read_tfp(&tfp_path, &tables)?)
            } else {
                None
            };
            Ok((tables, tfp))
        }
    }
}

fn read_tfp(path: &Path, tables: &SupplyUseTables) -> Result<TfpPanel, CliError> {
    let rows: Vec<crate::ingest::TfpRow> = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .and_then(|mut r| r.deserialize().collect::<Result<_, _>>())
        .map_err(|e| IngestError::Parse {
            file: "tfp.csv".into(),
            detail: e.to_string(),
        })?;
    Ok(TfpPanel::from_rows(&rows, &tables.industries)?)
}

/// Writes `panel.csv`, `household_panel.csv`, `economy.json`,
/// `snapshots/<year>.json`, `filter_report.json` and, with productivity data,
/// `tfp_covariance.json`.
pub fn cmd_ingest(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let (tables, tfp) = load_tables(cfg)?;
    let opts = PanelOptions {
        min_avg_share: cfg.ingest.min_avg_share,
        tradeable_threshold: if cfg.open_economy {
            cfg.ingest.tradeable_threshold
        } else {
            f64::INFINITY
        },
    };
    let build = build_panel(&tables, &opts)?;
    let (household, household_report) = build_household_panel(&tables, cfg.ingest.min_avg_share)?;
    let economy = Economy::new(
        tables.industries.clone(),
        tables.labels.clone(),
        build.tradeable.clone(),
    )?;
    let codes = economy.codes();
    let years = tables.year_list();
    let base_year = cfg
        .ingest
        .base_year
        .unwrap_or(*years.last().expect("panel has years"));
    if !years.contains(&base_year) {
        return Err(IngestError::UnknownYear(base_year).into());
    }

    ctx.write_csv("panel.csv", |w| {
        write_panel_csv(&build.observations, codes, w)
    })?;
    ctx.write_csv("household_panel.csv", |w| {
        write_household_csv(&household, codes, w)
    })?;
    ctx.write_json("economy.json", &economy)?;
    for &year in &years {
        let snapshot = build_snapshot(&tables, year, &build.tradeable)?;
        ctx.write_json(&format!("snapshots/{year}.json"), &snapshot)?;
    }
    if let Some(tfp) = &tfp {
        let cov = tfp_covariance(
            tfp,
            cfg.ingest.tfp_horizon_years,
            cfg.ingest.tfp_overlapping,
        )?;
        ctx.write_json("tfp_covariance.json", &cov)?;
    } else {
        log::warn!("no productivity series; business-cycle experiments will be skipped");
    }
    let summary = IngestSummary {
        years,
        base_year,
        panel: build.report,
        household: household_report,
        tradeable: codes
            .iter()
            .zip(&build.tradeable)
            .filter(|(_, t)| **t)
            .map(|(c, _)| c.clone())
            .collect(),
        tfp_available: tfp.is_some(),
    };
    ctx.write_json("filter_report.json", &summary)?;
    log::info!(
        "panel: {} of {} pairs kept; tradeable: {:?}",
        build.report.kept,
        build.report.candidates,
        summary.tradeable
    );
    Ok(())
}

// ---- estimate ----

fn write_mode_csv<W: std::io::Write>(
    codes: &[String],
    r: &EstimationResult,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["code", "estimate", "se"])?;
    let fmt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:.9}"));
    for (i, code) in codes.iter().enumerate() {
        let se = r.se_theta.as_ref().map(|s| s[i]);
        w.write_record([code.clone(), format!("{:.9}", r.theta_hat[i]), fmt(se)])?;
    }
    if let Some(xi) = r.xi_hat {
        w.write_record(["armington".to_string(), format!("{xi:.9}"), fmt(r.se_xi)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `estimates.json`, `estimates_<mode>.csv` per mode and, with the
/// sector-specific mode, the combined `estimates.csv`.
pub fn cmd_estimate(ctx: &Context) -> Result<(), CliError> {
    let economy: Economy = ctx.read_json("economy.json")?;
    let codes = economy.codes();
    let panel = read_panel_csv(&ctx.read_bytes("panel.csv")?[..], codes)?;
    let rp = residualize(&panel, codes.len())?;

    let mut modes: Vec<EstimationMode> = Vec::new();
    for m in &ctx.cfg.estimation.modes {
        if !modes.contains(m) {
            modes.push(*m);
        }
    }
    let mut results = Vec::new();
    for mode in modes {
        let r = estimate(&rp, mode)?;
        if !r.converged {
            if !ctx.allow_nonconverged {
                return Err(CliError::NotConverged {
                    mode: mode.name(),
                    objective: r.objective_value,
                });
            }
            log::warn!("{} estimation did not converge; keeping it", mode.name());
        }
        if r.singular_variance {
            log::warn!(
                "{}: singular moment Jacobian, standard errors omitted",
                mode.name()
            );
        }
        results.push(r);
    }
    let household = if ctx.cfg.estimation.household {
        let obs = read_household_csv(&ctx.read_bytes("household_panel.csv")?[..], codes)?;
        Some(estimate_household_nu(&obs)?)
    } else {
        None
    };
    let estimates = Estimates { results, household };

    for r in &estimates.results {
        ctx.write_csv(&format!("estimates_{}.csv", r.mode.name()), |w| {
            write_mode_csv(codes, r, w)
        })?;
    }
    if let Some(main) = estimates.get(EstimationMode::SectorSpecific) {
        let biased = estimates.get(EstimationMode::BiasedClosed);
        let uniform = estimates.get(EstimationMode::Uniform);
        ctx.write_csv("estimates.csv", |w| {
            write_estimates_csv(codes, main, biased, uniform, w)
        })?;
    }
    ctx.write_json("estimates.json", &estimates)?;
    Ok(())
}

// ---- calibrate ----

fn pick<T: Clone>(
    configured: Option<T>,
    estimated: Option<T>,
    what: &'static str,
    sources: &mut Vec<(String, ValueSource)>,
) -> Result<T, CliError> {
    let (v, src) = match (configured, estimated) {
        (Some(v), _) => (v, ValueSource::Configured),
        (None, Some(v)) => (v, ValueSource::Estimated),
        (None, None) => return Err(CliError::MissingElasticity(what)),
    };
    sources.push((what.to_string(), src));
    Ok(v)
}

/// Writes `models/<calibration>_<open|closed>.json` and `calibration.json`.
pub fn cmd_calibrate(ctx: &Context) -> Result<(), CliError> {
    let economy: Economy = ctx.read_json("economy.json")?;
    let summary: IngestSummary = ctx.read_json("filter_report.json")?;
    let base_year = ctx.cfg.ingest.base_year.unwrap_or(summary.base_year);
    let snapshot: IOSnapshot = ctx.read_json(&format!("snapshots/{base_year}.json"))?;
    let estimates: Option<Estimates> = ctx.read_json_if_present("estimates.json")?;
    let est = |mode| estimates.as_ref().and_then(|e| e.get(mode));
    let main = est(EstimationMode::SectorSpecific);
    let uniform = est(EstimationMode::Uniform);

    let conf = &ctx.cfg.elasticities;
    let mut sources = vec![("sigma".to_string(), ValueSource::Configured)];
    let theta = pick(
        conf.theta.clone(),
        main.map(|r| r.theta_hat.clone()),
        "theta",
        &mut sources,
    )?;
    let theta_uniform = pick(
        conf.theta_uniform,
        uniform.map(|r| r.theta_hat[0]),
        "theta_uniform",
        &mut sources,
    )?;
    let xi = pick(
        conf.xi,
        main.and_then(|r| r.xi_hat)
            .or_else(|| uniform.and_then(|r| r.xi_hat)),
        "xi",
        &mut sources,
    )?;
    let xi_export = conf.xi_export.unwrap_or(xi);
    sources.push((
        "xi_export".into(),
        if conf.xi_export.is_some() {
            ValueSource::Configured
        } else {
            sources.last().expect("xi recorded").1
        },
    ));
    let household = estimates
        .as_ref()
        .and_then(|e| e.household.as_ref())
        .map(|h| h.nu_hat);
    let nu = match (conf.nu, household) {
        (Some(v), _) => {
            sources.push(("nu".into(), ValueSource::Configured));
            v
        }
        (None, Some(v)) => {
            sources.push(("nu".into(), ValueSource::Estimated));
            v
        }
        (None, None) => {
            log::warn!("no household elasticity; using nu = 1");
            sources.push(("nu".into(), ValueSource::Default));
            1.0
        }
    };
    let elasticities = Elasticities {
        sigma: conf.sigma,
        theta: theta.clone(),
        xi,
        nu,
        xi_export,
    };

    let mut written = Vec::new();
    for &kind in economy_kinds(&ctx.cfg) {
        let base = calibrate(&economy, &snapshot, &elasticities, kind == "open")?;
        for variant in calibration_variants(&base, &theta, theta_uniform)? {
            // The base point must solve before anything is simulated on it.
            solve_equilibrium(&variant.model, &Shock::base(economy.n_sectors()))?;
            let rel = model_path(&variant.name, kind);
            ctx.write_json(&rel, &variant.model)?;
            written.push(rel);
        }
    }
    let record = CalibrationRecord {
        base_year,
        elasticities,
        theta_uniform,
        sources,
        models: written,
    };
    ctx.write_json("calibration.json", &record)
}

// ---- simulate ----

fn load_models(ctx: &Context, kind: &str) -> Result<Vec<NamedModel>, CliError> {
    CALIBRATIONS
        .iter()
        .map(|name| {
            let model: CalibratedModel = ctx.read_json(&model_path(name, kind))?;
            Ok(NamedModel {
                name: name.to_string(),
                model,
            })
        })
        .collect()
}

/// Runs every enabled experiment for each economy. Individual scenario
/// failures go to `simulate/failures.json`; the command fails only when
/// nothing succeeded.
pub fn cmd_simulate(ctx: &Context) -> Result<(), CliError> {
    let sc = &ctx.cfg.scenarios;
    let cov: Option<TfpCovariance> = ctx.read_json_if_present("tfp_covariance.json")?;
    let mut failures: Vec<FailureEntry> = Vec::new();
    let mut succeeded = 0;
    let mut economies = Vec::new();
    let mut fail =
        |economy: &str, experiment: &str, calibration: &str, scenario: &str, error: String| {
            log::warn!("{economy} {experiment} {scenario} ({calibration}): {error}");
            failures.push(FailureEntry {
                economy: economy.into(),
                experiment: experiment.into(),
                calibration: calibration.into(),
                scenario: scenario.into(),
                error,
            });
        };

    for &kind in economy_kinds(&ctx.cfg) {
        let models = load_models(ctx, kind)?;
        let mut res = EconomyResults {
            economy: kind.into(),
            foreign_price: None,
            severe_tfp: None,
            business_cycle: None,
        };
        if kind == "open" && sc.foreign_price.enabled {
            match foreign_price_experiment(
                &models,
                sc.foreign_price.magnitude,
                sc.foreign_price.top_k,
            ) {
                Ok(r) => {
                    for f in &r.failures {
                        fail(
                            kind,
                            "foreign_price",
                            &f.calibration,
                            &f.scenario,
                            f.error.clone(),
                        );
                    }
                    if !r.rows.is_empty() || r.failures.is_empty() {
                        succeeded += 1;
                    }
                    ctx.write_csv(&format!("simulate/{kind}/foreign_price.csv"), |w| {
                        r.write_csv(w)
                    })?;
                    res.foreign_price = Some(r);
                }
                Err(e) => fail(kind, "foreign_price", "", "", e.to_string()),
            }
        }
        if sc.severe_tfp.enabled {
            match severe_tfp_experiment(&models, sc.severe_tfp.magnitude) {
                Ok(r) => {
                    for f in &r.failures {
                        fail(
                            kind,
                            "severe_tfp",
                            &f.calibration,
                            &f.scenario,
                            f.error.clone(),
                        );
                    }
                    if !r.rows.is_empty() || r.failures.is_empty() {
                        succeeded += 1;
                    }
                    ctx.write_csv(&format!("simulate/{kind}/severe_tfp.csv"), |w| {
                        r.write_csv(w)
                    })?;
                    res.severe_tfp = Some(r);
                }
                Err(e) => fail(kind, "severe_tfp", "", "", e.to_string()),
            }
        }
        if sc.business_cycle.enabled {
            let outcome = match &cov {
                None => Err("tfp_covariance.json not found; ingest needs tfp.csv".to_string()),
                Some(c) => business_cycle_experiment(
                    &models,
                    &c.cov,
                    sc.business_cycle.n_draws,
                    ctx.cfg.seed,
                )
                .map_err(|e| e.to_string()),
            };
            match outcome {
                Ok(r) => {
                    for &d in &r.dropped {
                        fail(
                            kind,
                            "business_cycle",
                            "",
                            &format!("draw {d}"),
                            "solver failure".into(),
                        );
                    }
                    if r.dropped.len() < r.n_draws || r.n_draws == 0 {
                        succeeded += 1;
                    }
                    let dir = format!("simulate/{kind}");
                    ctx.write_csv(&format!("{dir}/business_cycle_summary.csv"), |w| {
                        r.write_summary_csv(w)
                    })?;
                    ctx.write_csv(&format!("{dir}/business_cycle_prices.csv"), |w| {
                        r.write_prices_csv(w)
                    })?;
                    let hist: Vec<(String, Histogram)> = r
                        .calibrations
                        .iter()
                        .cloned()
                        .zip(r.histograms(sc.business_cycle.histogram_bins))
                        .collect();
                    ctx.write_json(&format!("{dir}/business_cycle_histogram.json"), &hist)?;
                    res.business_cycle = Some(r);
                }
                Err(e) => fail(kind, "business_cycle", "", "", e),
            }
        }
        economies.push(res);
    }
    let summary = SimulationSummary {
        succeeded,
        failed: failures.len(),
        economies,
    };
    ctx.write_json("simulate/failures.json", &failures)?;
    ctx.write_json("simulate/summary.json", &summary)?;
    let any_enabled =
        sc.foreign_price.enabled || sc.severe_tfp.enabled || sc.business_cycle.enabled;
    if succeeded == 0 && any_enabled {
        return Err(CliError::AllScenariosFailed(
            ctx.path("simulate/failures.json"),
        ));
    }
    Ok(())
}

// ---- report ----

/// A CSV artifact rendered as a markdown table.
fn markdown_table(bytes: &[u8], max_rows: usize) -> Result<String, csv::Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(bytes);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut out = format!(
        "| {} |\n|{}\n",
        header.join(" | "),
        " --- |".repeat(header.len())
    );
    let mut shown = 0;
    let mut total = 0;
    for rec in rdr.records() {
        let rec = rec?;
        total += 1;
        if shown < max_rows {
            let cells: Vec<&str> = rec.iter().collect();
            out.push_str(&format!("| {} |\n", cells.join(" | ")));
            shown += 1;
        }
    }
    if total > shown {
        out.push_str(&format!("\n{} more rows in the CSV.\n", total - shown));
    }
    Ok(out)
}

/// Collects the available artifacts into `report.md` and returns its text.
pub fn cmd_report(ctx: &Context) -> Result<String, CliError> {
    let mut md = format!(
        "<!-- prodnet {} config_hash={} seed={} -->\n# Elasticity estimates and shock experiments\n",
        ctx.provenance.version, ctx.provenance.config_hash, ctx.provenance.seed
    );
    let mut sections = 0;
    let table =
        |md: &mut String, title: &str, rel: &str, max_rows: usize| -> Result<usize, CliError> {
            let path = ctx.path(rel);
            if !path.exists() {
                return Ok(0);
            }
            let bytes = ctx.read_bytes(rel)?;
            let body = markdown_table(&bytes, max_rows).map_err(|e| CliError::BadInput {
                path,
                detail: e.to_string(),
            })?;
            md.push_str(&format!("\n## {title}\n\n{body}"));
            Ok(1)
        };

    if let Some(s) = ctx.read_json_if_present::<IngestSummary>("filter_report.json")? {
        md.push_str(&format!(
            "\n## Data\n\nYears {}-{}, base year {}. Panel keeps {} of {} purchaser-input-year cells \
             ({} below the share floor, {} non-finite). Tradeable sectors: {}.\n",
            s.years.first().copied().unwrap_or_default(),
            s.years.last().copied().unwrap_or_default(),
            s.base_year,
            s.panel.kept,
            s.panel.candidates,
            s.panel.dropped_low_share,
            s.panel.dropped_nonfinite,
            if s.tradeable.is_empty() { "none".to_string() } else { s.tradeable.join(", ") },
        ));
        sections += 1;
    }
    sections += table(&mut md, "Elasticity estimates", "estimates.csv", usize::MAX)?;
    if let Some(e) = ctx.read_json_if_present::<Estimates>("estimates.json")? {
        if let Some(h) = &e.household {
            let se =
                h.se.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"));
            md.push_str(&format!(
                "\nHousehold elasticity: {:.4} (se {se}).\n",
                h.nu_hat
            ));
        }
    }
    for kind in ["open", "closed"] {
        let dir = format!("simulate/{kind}");
        sections += table(
            &mut md,
            &format!("Import-price shocks, {kind} economy (P/P_base - 1)"),
            &format!("{dir}/foreign_price.csv"),
            usize::MAX,
        )?;
        sections += table(
            &mut md,
            &format!("Severe productivity shocks, {kind} economy (log GDP change)"),
            &format!("{dir}/severe_tfp.csv"),
            10,
        )?;
        sections += table(
            &mut md,
            &format!("Business cycles, {kind} economy (log GDP change)"),
            &format!("{dir}/business_cycle_summary.csv"),
            usize::MAX,
        )?;
        sections += table(
            &mut md,
            &format!("Mean price response over business cycles, {kind} economy"),
            &format!("{dir}/business_cycle_prices.csv"),
            usize::MAX,
        )?;
    }
    if let Some(f) = ctx.read_json_if_present::<Vec<FailureEntry>>("simulate/failures.json")? {
        if !f.is_empty() {
            md.push_str(&format!(
                "\n{} scenario failures are listed in simulate/failures.json.\n",
                f.len()
            ));
        }
    }
    if sections == 0 {
        return Err(CliError::MissingInput(ctx.path("filter_report.json")));
    }
    md.push_str("\nSkewness is the standardized third moment of the GDP draws.\n");
    ctx.write_text("report.md", &md)?;
    Ok(md)
}
