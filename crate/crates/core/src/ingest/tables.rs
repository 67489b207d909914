use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::IngestError;

/// Reserved codes in `use.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableCodes {
    /// Purchaser column holding personal consumption expenditure.
    pub household: String,
    /// Purchaser column holding exports.
    pub exports: String,
    /// Commodity row holding labor compensation.
    pub compensation: String,
}

impl Default for TableCodes {
    fn default() -> Self {
        Self {
            household: "F010".into(),
            exports: "F040".into(),
            compensation: "V001".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyRow {
    pub year: i32,
    pub commodity: String,
    pub industry: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UseRow {
    pub year: i32,
    pub industry: String,
    pub commodity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportRow {
    pub year: i32,
    pub commodity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub year: i32,
    pub industry: String,
    pub index: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfpRow {
    pub year: i32,
    pub industry: String,
    pub log_tfp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub code: String,
    pub label: String,
}

/// Table contents in the flat CSV schemas, before indexing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawRecords {
    pub supply: Vec<SupplyRow>,
    pub use_rows: Vec<UseRow>,
    pub imports: Vec<ImportRow>,
    pub prices: Vec<PriceRow>,
    pub labels: Vec<LabelRow>,
}

/// One year of tables, indexed by the sector and commodity order of the
/// parent [`SupplyUseTables`]. Monetary cells are nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct YearTables {
    /// Commodity-by-industry domestic supply.
    pub supply: DMatrix<f64>,
    /// Industry-by-commodity intermediate use.
    pub intermediate_use: DMatrix<f64>,
    pub imports: DVector<f64>,
    /// Labor compensation per industry.
    pub compensation: DVector<f64>,
    /// Household consumption per commodity.
    pub consumption: DVector<f64>,
    pub exports: DVector<f64>,
    pub price_index: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplyUseTables {
    pub industries: Vec<String>,
    pub labels: Vec<String>,
    pub commodities: Vec<String>,
    pub years: BTreeMap<i32, YearTables>,
}

impl SupplyUseTables {
    pub fn n_industries(&self) -> usize {
        self.industries.len()
    }

    pub fn year_list(&self) -> Vec<i32> {
        self.years.keys().copied().collect()
    }

    pub fn year(&self, year: i32) -> Result<&YearTables, IngestError> {
        self.years.get(&year).ok_or(IngestError::UnknownYear(year))
    }

    /// Multiplies every monetary cell by `factor`; price indices are kept.
    pub fn rescaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for t in out.years.values_mut() {
            t.supply *= factor;
            t.intermediate_use *= factor;
            t.imports *= factor;
            t.compensation *= factor;
            t.consumption *= factor;
            t.exports *= factor;
        }
        out
    }

    pub fn from_records(raw: &RawRecords, codes: &TableCodes) -> Result<Self, IngestError> {
        let industries: Vec<String> = if raw.labels.is_empty() {
            raw.supply
                .iter()
                .map(|r| r.industry.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        } else {
            raw.labels.iter().map(|l| l.code.clone()).collect()
        };
        let labels: Vec<String> = if raw.labels.is_empty() {
            industries.clone()
        } else {
            raw.labels.iter().map(|l| l.label.clone()).collect()
        };
        let ind_idx: HashMap<&str, usize> = industries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let commodities: Vec<String> = raw
            .supply
            .iter()
            .map(|r| r.commodity.clone())
            .chain(raw.imports.iter().map(|r| r.commodity.clone()))
            .chain(
                raw.use_rows
                    .iter()
                    .filter(|r| r.commodity != codes.compensation)
                    .map(|r| r.commodity.clone()),
            )
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let com_idx: HashMap<&str, usize> = commodities
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();

        let years: BTreeSet<i32> = raw.supply.iter().map(|r| r.year).collect();
        let in_years = |file: &str, found: BTreeSet<i32>| -> Result<(), IngestError> {
            if let Some(y) = years.iter().find(|y| !found.contains(y)) {
                return Err(IngestError::MissingYear {
                    file: file.into(),
                    year: *y,
                });
            }
            if let Some(y) = found.iter().find(|y| !years.contains(y)) {
                return Err(IngestError::MissingYear {
                    file: "supply.csv".into(),
                    year: *y,
                });
            }
            Ok(())
        };
        in_years("use.csv", raw.use_rows.iter().map(|r| r.year).collect())?;
        in_years("imports.csv", raw.imports.iter().map(|r| r.year).collect())?;
        in_years("prices.csv", raw.prices.iter().map(|r| r.year).collect())?;

        let (n, c) = (industries.len(), commodities.len());
        let mut out: BTreeMap<i32, YearTables> = years
            .iter()
            .map(|&y| {
                (
                    y,
                    YearTables {
                        supply: DMatrix::zeros(c, n),
                        intermediate_use: DMatrix::zeros(n, c),
                        imports: DVector::zeros(c),
                        compensation: DVector::zeros(n),
                        consumption: DVector::zeros(c),
                        exports: DVector::zeros(c),
                        price_index: DVector::from_element(n, f64::NAN),
                    },
                )
            })
            .collect();

        let industry = |file: &str, code: &str| {
            ind_idx
                .get(code)
                .copied()
                .ok_or_else(|| IngestError::UnknownIndustry {
                    file: file.into(),
                    code: code.into(),
                })
        };

        for r in &raw.supply {
            let v = cell("supply.csv", r.year, &r.commodity, &r.industry, r.value)?;
            let j = industry("supply.csv", &r.industry)?;
            out.get_mut(&r.year).expect("year indexed").supply
                [(com_idx[r.commodity.as_str()], j)] += v;
        }
        for r in &raw.use_rows {
            let v = cell("use.csv", r.year, &r.commodity, &r.industry, r.value)?;
            let t = out.get_mut(&r.year).expect("year indexed");
            if r.commodity == codes.compensation {
                t.compensation[industry("use.csv", &r.industry)?] += v;
                continue;
            }
            let ci = com_idx[r.commodity.as_str()];
            if r.industry == codes.household {
                t.consumption[ci] += v;
            } else if r.industry == codes.exports {
                t.exports[ci] += v;
            } else {
                t.intermediate_use[(industry("use.csv", &r.industry)?, ci)] += v;
            }
        }
        for r in &raw.imports {
            let v = cell("imports.csv", r.year, &r.commodity, "", r.value)?;
            out.get_mut(&r.year).expect("year indexed").imports[com_idx[r.commodity.as_str()]] += v;
        }
        for r in &raw.prices {
            if !r.index.is_finite() {
                return Err(IngestError::Parse {
                    file: "prices.csv".into(),
                    detail: format!("non-finite index for {} in {}", r.industry, r.year),
                });
            }
            let j = industry("prices.csv", &r.industry)?;
            out.get_mut(&r.year).expect("year indexed").price_index[j] = r.index;
        }
        for (&year, t) in &out {
            if let Some(j) = t.price_index.iter().position(|p| p.is_nan()) {
                return Err(IngestError::MissingPrice {
                    year,
                    industry: industries[j].clone(),
                });
            }
        }
        Ok(Self {
            industries,
            labels,
            commodities,
            years: out,
        })
    }
}

fn cell(file: &str, year: i32, row: &str, col: &str, value: f64) -> Result<f64, IngestError> {
    if !value.is_finite() {
        return Err(IngestError::Parse {
            file: file.into(),
            detail: format!("non-finite value at year {year}, {row} {col}"),
        });
    }
    if value < 0.0 {
        log::warn!("{file}: negative cell {value} at year {year}, {row} {col} clamped to 0");
        return Ok(0.0);
    }
    Ok(value)
}

/// Log TFP by year, in a fixed industry order.
#[derive(Debug, Clone, PartialEq)]
pub struct TfpPanel {
    pub industries: Vec<String>,
    pub years: BTreeMap<i32, DVector<f64>>,
}

impl TfpPanel {
    pub fn from_rows(rows: &[TfpRow], industries: &[String]) -> Result<Self, IngestError> {
        let idx: HashMap<&str, usize> = industries
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut years: BTreeMap<i32, DVector<f64>> = BTreeMap::new();
        for r in rows {
            let i = *idx
                .get(r.industry.as_str())
                .ok_or_else(|| IngestError::UnknownIndustry {
                    file: "tfp.csv".into(),
                    code: r.industry.clone(),
                })?;
            if !r.log_tfp.is_finite() {
                return Err(IngestError::Parse {
                    file: "tfp.csv".into(),
                    detail: format!("non-finite log_tfp for {} in {}", r.industry, r.year),
                });
            }
            years
                .entry(r.year)
                .or_insert_with(|| DVector::from_element(industries.len(), f64::NAN))[i] =
                r.log_tfp;
        }
        for (y, v) in &years {
            if let Some(i) = v.iter().position(|x| x.is_nan()) {
                return Err(IngestError::Parse {
                    file: "tfp.csv".into(),
                    detail: format!("no log_tfp for industry {} in {y}", industries[i]),
                });
            }
        }
        Ok(Self {
            industries: industries.to_vec(),
            years,
        })
    }
}

pub(crate) fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, IngestError> {
    if !path.exists() {
        return Err(IngestError::MissingFile(path.to_path_buf()));
    }
    let file = path.file_name().map_or_else(
        || path.display().to_string(),
        |f| f.to_string_lossy().into_owned(),
    );
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| IngestError::Parse {
            file: file.clone(),
            detail: e.to_string(),
        })?;
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e| IngestError::Parse {
                file: file.clone(),
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Reads `supply.csv`, `use.csv`, `imports.csv`, `prices.csv` and the
/// optional `industries.csv` and `tfp.csv` from a directory.
pub fn read_fixture_dir(
    dir: &Path,
    codes: &TableCodes,
) -> Result<(SupplyUseTables, Option<TfpPanel>), IngestError> {
    let labels_path = dir.join("industries.csv");
    let raw = RawRecords {
        supply: read_csv(&dir.join("supply.csv"))?,
        use_rows: read_csv(&dir.join("use.csv"))?,
        imports: read_csv(&dir.join("imports.csv"))?,
        prices: read_csv(&dir.join("prices.csv"))?,
        labels: if labels_path.exists() {
            read_csv(&labels_path)?
        } else {
            Vec::new()
        },
    };
    let tables = SupplyUseTables::from_records(&raw, codes)?;
    let tfp_path = dir.join("tfp.csv");
    let tfp = if tfp_path.exists() {
        let rows: Vec<TfpRow> = read_csv(&tfp_path)?;
        Some(TfpPanel::from_rows(&rows, &tables.industries)?)
    } else {
        None
    };
    Ok((tables, tfp))
}
