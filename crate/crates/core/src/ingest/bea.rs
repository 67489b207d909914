//! Pulls Supply, Use and price tables from the BEA data API.
//!
//! Raw JSON responses are cached under one file per table; a cached table is
//! never refetched, so a populated cache reproduces the tables offline.
//! Dataset names, table IDs and response field names are configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tables::{
    ImportRow, LabelRow, PriceRow, RawRecords, SupplyRow, SupplyUseTables, TableCodes, UseRow,
};
use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeaTable {
    pub dataset: String,
    pub table_id: String,
    /// Query parameter carrying `table_id`.
    pub table_param: String,
    pub year_param: String,
    /// Extra query parameters sent verbatim.
    pub params: BTreeMap<String, String>,
    pub row_field: String,
    /// Column code field; empty for one-dimensional tables.
    pub col_field: String,
    pub value_field: String,
    pub year_field: String,
    /// Field holding the column description, used for sector labels.
    pub label_field: Option<String>,
}

impl Default for BeaTable {
    fn default() -> Self {
        Self {
            dataset: "InputOutput".into(),
            table_id: String::new(),
            table_param: "TableID".into(),
            year_param: "Year".into(),
            params: BTreeMap::new(),
            row_field: "RowCode".into(),
            col_field: "ColCode".into(),
            value_field: "DataValue".into(),
            year_field: "Year".into(),
            label_field: None,
        }
    }
}

/// The only place the API key is read from.
pub const API_KEY_ENV: &str = "BEA_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeaConfig {
    pub api_base_url: String,
    pub first_year: i32,
    pub last_year: i32,
    pub supply: BeaTable,
    pub use_table: BeaTable,
    pub prices: BeaTable,
    /// Supply-table column holding imports.
    pub imports_column: String,
    /// Row or column codes that are totals or adjustments, not sectors.
    pub excluded_codes: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for BeaConfig {
    fn default() -> Self {
        Self {
            api_base_url: "https://apps.bea.gov/api/data".into(),
            first_year: 1997,
            last_year: 2024,
            supply: BeaTable {
                table_id: "262".into(),
                label_field: Some("ColDescr".into()),
                ..BeaTable::default()
            },
            use_table: BeaTable {
                table_id: "259".into(),
                ..BeaTable::default()
            },
            prices: BeaTable {
                dataset: "GDPbyIndustry".into(),
                table_id: "11".into(),
                params: [("Frequency", "A"), ("Industry", "ALL")]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect(),
                row_field: "Industry".into(),
                col_field: String::new(),
                ..BeaTable::default()
            },
            imports_column: "MCIF".into(),
            excluded_codes: [
                "T007", "T013", "T014", "T015", "T016", "T017", "T018", "T019", "MADJ", "MDTY",
                "TRADE", "TRANS",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            timeout_secs: 120,
        }
    }
}

/// One cell of a downloaded table.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    year: i32,
    row: String,
    col: Option<String>,
    label: Option<String>,
    value: f64,
}

fn cache_path(cache_dir: &Path, name: &str, t: &BeaTable, cfg: &BeaConfig) -> PathBuf {
    cache_dir.join(format!(
        "{name}_{}_{}_{}-{}.json",
        t.dataset, t.table_id, cfg.first_year, cfg.last_year
    ))
}

/// Writes via a temporary file in the same directory and renames it into
/// place, so readers never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IngestError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn fetch_raw(cfg: &BeaConfig, t: &BeaTable, key: &str) -> Result<String, IngestError> {
    let years: Vec<String> = (cfg.first_year..=cfg.last_year)
        .map(|y| y.to_string())
        .collect();
    let mut params: Vec<(String, String)> = vec![
        ("UserID".into(), key.into()),
        ("method".into(), "GetData".into()),
        ("DataSetName".into(), t.dataset.clone()),
        (t.table_param.clone(), t.table_id.clone()),
        (t.year_param.clone(), years.join(",")),
        ("ResultFormat".into(), "JSON".into()),
    ];
    params.extend(t.params.iter().map(|(k, v)| (k.clone(), v.clone())));
    let url = reqwest::Url::parse_with_params(&cfg.api_base_url, &params)
        .map_err(|e| IngestError::Transport(e.to_string()))?;
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| IngestError::Transport(e.to_string()))?;
    let resp = client
        .get(url)
        .send()
        .map_err(|e| IngestError::Transport(e.without_url().to_string()))?;
    let status = resp.status();
    if !status.is_success() {
        return Err(IngestError::Transport(format!(
            "HTTP {status} for table {}",
            t.table_id
        )));
    }
    let body = resp
        .text()
        .map_err(|e| IngestError::Transport(e.without_url().to_string()))?;
    // Responses echo the request parameters, key included.
    Ok(body.replace(key, "REDACTED"))
}

fn string_field(rec: &Value, field: &str) -> Result<String, IngestError> {
    match rec.get(field) {
        Some(Value::String(s)) => Ok(s.trim().to_string()),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(IngestError::Schema {
            field: field.into(),
            detail: format!("has unexpected type: {other}"),
        }),
        None => Err(IngestError::Schema {
            field: field.into(),
            detail: "is missing".into(),
        }),
    }
}

fn parse_value(s: &str) -> Result<f64, IngestError> {
    let cleaned = s.replace(',', "");
    match cleaned.as_str() {
        "" | "..." | "(D)" | "(NA)" | "---" => Ok(0.0),
        v => v.parse().map_err(|_| IngestError::Schema {
            field: "value".into(),
            detail: format!("is not numeric: {s:?}"),
        }),
    }
}

fn parse_cells(body: &str, t: &BeaTable) -> Result<Vec<Cell>, IngestError> {
    let root: Value = serde_json::from_str(body).map_err(|e| IngestError::Schema {
        field: "BEAAPI".into(),
        detail: format!("is not valid JSON: {e}"),
    })?;
    let api = root.get("BEAAPI").ok_or(IngestError::Schema {
        field: "BEAAPI".into(),
        detail: "is missing".into(),
    })?;
    let results = api.get("Results").ok_or_else(|| IngestError::Schema {
        field: "Results".into(),
        detail: match api.get("Error") {
            Some(e) => format!("is missing; API error: {e}"),
            None => "is missing".into(),
        },
    })?;
    let results = match results {
        Value::Array(a) => a.first().cloned().unwrap_or(Value::Null),
        other => other.clone(),
    };
    let data = results
        .get("Data")
        .and_then(Value::as_array)
        .ok_or(IngestError::Schema {
            field: "Data".into(),
            detail: "is missing or not an array".into(),
        })?;
    data.iter()
        .map(|rec| {
            let year_s = string_field(rec, &t.year_field)?;
            let year = year_s.parse().map_err(|_| IngestError::Schema {
                field: t.year_field.clone(),
                detail: format!("is not a year: {year_s:?}"),
            })?;
            Ok(Cell {
                year,
                row: string_field(rec, &t.row_field)?,
                col: (!t.col_field.is_empty())
                    .then(|| string_field(rec, &t.col_field))
                    .transpose()?,
                label: t
                    .label_field
                    .as_deref()
                    .and_then(|f| rec.get(f))
                    .and_then(Value::as_str)
                    .map(|s| s.trim().to_string()),
                value: parse_value(&string_field(rec, &t.value_field)?)?,
            })
        })
        .collect()
}

fn load_table(
    cfg: &BeaConfig,
    name: &str,
    t: &BeaTable,
    cache_dir: &Path,
) -> Result<Vec<Cell>, IngestError> {
    let path = cache_path(cache_dir, name, t, cfg);
    let body = if path.exists() {
        fs::read_to_string(&path).map_err(|source| IngestError::Io {
            path: path.clone(),
            source,
        })?
    } else {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| IngestError::MissingApiKey(API_KEY_ENV.into()))?;
        let body = fetch_raw(cfg, t, &key)?;
        // Validate before caching so a bad response is not persisted.
        parse_cells(&body, t)?;
        write_atomic(&path, body.as_bytes())?;
        body
    };
    let cells = parse_cells(&body, t)?;
    let years = cfg.first_year..=cfg.last_year;
    let present: BTreeSet<i32> = cells.iter().map(|c| c.year).collect();
    if let Some(y) = years.clone().find(|y| !present.contains(y)) {
        return Err(IngestError::MissingYear {
            file: path.display().to_string(),
            year: y,
        });
    }
    Ok(cells
        .into_iter()
        .filter(|c| years.contains(&c.year))
        .collect())
}

/// Downloads (or reads from cache) and parses the configured tables.
pub fn fetch_bea_tables(
    cfg: &BeaConfig,
    codes: &TableCodes,
    cache_dir: &Path,
) -> Result<SupplyUseTables, IngestError> {
    let supply = load_table(cfg, "supply", &cfg.supply, cache_dir)?;
    let use_cells = load_table(cfg, "use", &cfg.use_table, cache_dir)?;
    let prices = load_table(cfg, "prices", &cfg.prices, cache_dir)?;
    let excluded: BTreeSet<&str> = cfg.excluded_codes.iter().map(String::as_str).collect();

    let mut raw = RawRecords::default();
    let mut labels: BTreeMap<String, String> = BTreeMap::new();
    for c in supply {
        let col = c.col.ok_or(IngestError::Schema {
            field: cfg.supply.col_field.clone(),
            detail: "is required for the supply table".into(),
        })?;
        if excluded.contains(c.row.as_str()) {
            continue;
        }
        if col == cfg.imports_column {
            raw.imports.push(ImportRow {
                year: c.year,
                commodity: c.row,
                value: c.value,
            });
        } else if !excluded.contains(col.as_str()) {
            if let Some(label) = c.label {
                labels.entry(col.clone()).or_insert(label);
            }
            raw.supply.push(SupplyRow {
                year: c.year,
                commodity: c.row,
                industry: col,
                value: c.value,
            });
        }
    }
    let industries: BTreeSet<String> = raw.supply.iter().map(|r| r.industry.clone()).collect();
    let commodities: BTreeSet<String> = raw.supply.iter().map(|r| r.commodity.clone()).collect();
    raw.imports.retain(|r| commodities.contains(&r.commodity));
    for c in use_cells {
        let Some(col) = c.col else { continue };
        let row_ok = commodities.contains(&c.row) || c.row == codes.compensation;
        let col_ok = industries.contains(&col) || col == codes.household || col == codes.exports;
        let final_demand_factor = c.row == codes.compensation && !industries.contains(&col);
        if row_ok && col_ok && !final_demand_factor {
            raw.use_rows.push(UseRow {
                year: c.year,
                industry: col,
                commodity: c.row,
                value: c.value,
            });
        }
    }
    for c in prices {
        if industries.contains(&c.row) {
            raw.prices.push(PriceRow {
                year: c.year,
                industry: c.row,
                index: c.value,
            });
        }
    }
    raw.labels = industries
        .iter()
        .map(|code| LabelRow {
            code: code.clone(),
            label: labels.get(code).cloned().unwrap_or_else(|| code.clone()),
        })
        .collect();
    SupplyUseTables::from_records(&raw, codes)
}
