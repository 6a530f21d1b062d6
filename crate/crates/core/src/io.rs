//! Dataset ingestion and report serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::gof::GofReport;
use crate::likelihood::{FitResult, Param};
use crate::reliability::ReliabilityEstimate;
use crate::sim::SimReport;

/// Significant digits kept in every serialized float.
pub const SIGNIFICANT_DIGITS: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExclusionLog {
    /// Rows dropped for a non-positive value (1-based data row numbers).
    pub non_positive_rows: Vec<usize>,
}

impl ExclusionLog {
    pub fn count(&self) -> usize {
        self.non_positive_rows.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub source: String,
    pub values: Vec<f64>,
    /// Per-value group label, one of `levels`.
    pub labels: Option<Vec<String>>,
    pub levels: Option<[String; 2]>,
    pub split_rule: Option<String>,
    pub exclusions: ExclusionLog,
}

impl Dataset {
    /// Values of the first and second level, in file order.
    pub fn groups(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let (Some(labels), Some(levels)) = (&self.labels, &self.levels) else {
            return Err(Error::Config(
                "dataset has no grouping; pass a group column".to_string(),
            ));
        };
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (v, l) in self.values.iter().zip(labels) {
            if *l == levels[0] {
                first.push(*v);
            } else {
                second.push(*v);
            }
        }
        if first.is_empty() || second.is_empty() {
            return Err(Error::EmptyAfterExclusions);
        }
        Ok((first, second))
    }
}

fn parse_number(field: &str, row: usize, column: &str) -> Result<f64> {
    let t = field.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Parse {
            row,
            message: format!("column '{column}': '{t}' is not a finite number"),
        })
}

/// Reads a headed CSV file.
///
/// Non-positive values are dropped and logged. With `group_column` and
/// `split_at`, rows with covariate `≤ split_at` form the first group; with
/// `group_column` alone the column must hold exactly two labels, taken in
/// order of first appearance.
pub fn ingest_csv(
    path: &Path,
    value_column: &str,
    group_column: Option<&str>,
    split_at: Option<f64>,
) -> Result<Dataset> {
    if split_at.is_some() && group_column.is_none() {
        return Err(Error::Config(
            "a split threshold needs a group column".to_string(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyAfterExclusions);
    }
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Config(format!("column '{name}' not found in {}", path.display()))
        })
    };
    let vi = find(value_column)?;
    let gi = group_column.map(find).transpose()?;

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut exclusions = ExclusionLog::default();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        let field = rec.get(vi).ok_or_else(|| Error::Parse {
            row,
            message: format!("missing column '{value_column}'"),
        })?;
        let v = parse_number(field, row, value_column)?;
        let label = match (gi, split_at) {
            (Some(g), Some(t)) => {
                let c = parse_number(rec.get(g).unwrap_or(""), row, group_column.unwrap_or(""))?;
                Some(if c <= t { "low" } else { "high" }.to_string())
            }
            (Some(g), None) => Some(rec.get(g).unwrap_or("").to_string()),
            _ => None,
        };
        if v <= 0.0 {
            exclusions.non_positive_rows.push(row);
            continue;
        }
        values.push(v);
        if let Some(l) = label {
            raw_labels.push(l);
        }
    }
    if values.is_empty() {
        return Err(Error::EmptyAfterExclusions);
    }

    let (labels, levels, split_rule) = match (group_column, split_at) {
        (Some(g), Some(t)) => (
            Some(raw_labels),
            Some(["low".to_string(), "high".to_string()]),
            Some(format!("{g} <= {t} -> low, {g} > {t} -> high")),
        ),
        (Some(g), None) => {
            let mut seen: Vec<String> = Vec::new();
            for l in &raw_labels {
                if !seen.contains(l) {
                    seen.push(l.clone());
                }
            }
            if seen.len() != 2 {
                return Err(Error::InvalidData(format!(
                    "group column '{g}' has {} distinct labels, expected 2",
                    seen.len()
                )));
            }
            let levels = [seen[0].clone(), seen[1].clone()];
            (
                Some(raw_labels),
                Some(levels),
                Some(format!("{g} by label")),
            )
        }
        _ => (None, None, None),
    };
    Ok(Dataset {
        source: path.display().to_string(),
        values,
        labels,
        levels,
        split_rule,
        exclusions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_significant(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// Flat row view of a report for CSV and plain-text output.
pub trait Tabular {
    fn columns(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<Cell>>;
}

/// `v` rounded to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v)
        .parse()
        .unwrap_or(v)
}

pub fn format_significant(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let r = round_significant(v);
    if r != 0.0 && (r.abs() < 1e-4 || r.abs() >= 1e10) {
        let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, r);
        // strip trailing zeros of the mantissa
        let (m, e) = s.split_once('e').unwrap_or((&s, "0"));
        let m = if m.contains('.') {
            m.trim_end_matches('0').trim_end_matches('.')
        } else {
            m
        };
        format!("{m}e{e}")
    } else {
        format!("{r}")
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(x) = n.as_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_significant(x)) {
                        *n = r;
                    }
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// JSON with every float rounded to [`SIGNIFICANT_DIGITS`] digits. Field
/// order follows the struct declarations.
pub fn to_json<T: Serialize + ?Sized>(report: &T) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn to_csv<T: Tabular + ?Sized>(report: &T) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(report.columns())?;
    for row in report.rows() {
        w.write_record(row.iter().map(Cell::render))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidData(e.to_string()))
}

pub fn to_table<T: Tabular + ?Sized>(report: &T) -> String {
    let cols = report.columns();
    let rows: Vec<Vec<String>> = report
        .rows()
        .iter()
        .map(|r| r.iter().map(Cell::render).collect())
        .collect();
    let mut width: Vec<usize> = cols.iter().map(|c| c.len()).collect();
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:>w$}", w = *w))
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&cols);
    out.push('\n');
    out.push_str(
        &width
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("  "),
    );
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn serialize_report<T: Serialize + Tabular + ?Sized>(
    report: &T,
    format: Format,
) -> Result<Vec<u8>> {
    Ok(match format {
        Format::Json => to_json(report)?,
        Format::Csv => to_csv(report)?,
        Format::Table => to_table(report),
    }
    .into_bytes())
}

fn num(v: Option<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Num)
}

/// Column layout of the Monte Carlo summary table.
pub const SUMMARY_COLUMNS: [&str; 13] = [
    "n",
    "R_hat",
    "Bias",
    "MSE",
    "CI_lo",
    "CI_hi",
    "BootP_lo",
    "BootP_hi",
    "BootT_lo",
    "BootT_hi",
    "coverage_ACI",
    "coverage_BootP",
    "coverage_BootT",
];

impl Tabular for [SimReport] {
    fn columns(&self) -> Vec<String> {
        SUMMARY_COLUMNS.iter().map(|s| s.to_string()).collect()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.iter()
            .map(|r| {
                let n = if r.n1 == r.n2 {
                    Cell::Int(r.n1)
                } else {
                    Cell::Text(format!("{}/{}", r.n1, r.n2))
                };
                vec![
                    n,
                    Cell::Num(r.mean_r_hat),
                    Cell::Num(r.bias),
                    Cell::Num(r.mse),
                    num(r.aci.map(|s| s.mean_lower)),
                    num(r.aci.map(|s| s.mean_upper)),
                    num(r.boot_p.map(|s| s.mean_lower)),
                    num(r.boot_p.map(|s| s.mean_upper)),
                    num(r.boot_t.map(|s| s.mean_lower)),
                    num(r.boot_t.map(|s| s.mean_upper)),
                    num(r.aci.map(|s| s.coverage)),
                    num(r.boot_p.map(|s| s.coverage)),
                    num(r.boot_t.map(|s| s.coverage)),
                ]
            })
            .collect()
    }
}

impl Tabular for Vec<SimReport> {
    fn columns(&self) -> Vec<String> {
        self.as_slice().columns()
    }
    fn rows(&self) -> Vec<Vec<Cell>> {
        self.as_slice().rows()
    }
}

impl Tabular for [ReliabilityEstimate] {
    fn columns(&self) -> Vec<String> {
        [
            "method", "level", "R_hat", "variance", "lower", "upper", "clamped",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.iter()
            .map(|e| {
                vec![
                    Cell::Text(e.method.label().to_string()),
                    Cell::Num(e.level),
                    Cell::Num(e.r_hat),
                    Cell::Num(e.variance),
                    Cell::Num(e.ci_lower),
                    Cell::Num(e.ci_upper),
                    Cell::Text(e.clamped.to_string()),
                ]
            })
            .collect()
    }
}

impl Tabular for Vec<ReliabilityEstimate> {
    fn columns(&self) -> Vec<String> {
        self.as_slice().columns()
    }
    fn rows(&self) -> Vec<Vec<Cell>> {
        self.as_slice().rows()
    }
}

impl Tabular for FitResult {
    fn columns(&self) -> Vec<String> {
        ["parameter", "estimate", "std_error", "fixed"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        let se = self.std_errors();
        let mut rows: Vec<Vec<Cell>> = Param::ALL
            .iter()
            .map(|&p| {
                let fixed = !self.mask.is_free(p);
                vec![
                    Cell::Text(p.name().to_string()),
                    Cell::Num(self.estimates.get(p)),
                    if fixed {
                        Cell::Empty
                    } else {
                        Cell::Num(se[p.index()])
                    },
                    Cell::Text(fixed.to_string()),
                ]
            })
            .collect();
        rows.push(vec![
            Cell::Text("loglik".to_string()),
            Cell::Num(self.loglik),
            Cell::Empty,
            Cell::Empty,
        ]);
        rows
    }
}

impl Tabular for GofReport {
    fn columns(&self) -> Vec<String> {
        ["n", "ks_stat", "p_value", "method"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        vec![vec![
            Cell::Int(self.n),
            Cell::Num(self.ks_stat),
            Cell::Num(self.p_value),
            Cell::Text(self.method.clone()),
        ]]
    }
}

impl Tabular for [GofReport] {
    fn columns(&self) -> Vec<String> {
        ["group", "n", "ks_stat", "p_value", "method"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn rows(&self) -> Vec<Vec<Cell>> {
        self.iter()
            .enumerate()
            .map(|(i, g)| {
                let mut r = vec![Cell::Int(i + 1)];
                r.extend(g.rows().remove(0));
                r
            })
            .collect()
    }
}
