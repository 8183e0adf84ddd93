//! Real-data ingestion for truths with an estimated correlation matrix.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Largest admissible absolute pairwise correlation.
pub const MAX_ABS_CORRELATION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DatasetSummary {
    pub feature_count: usize,
    pub row_count: usize,
    pub feature_names: Vec<String>,
    pub dropped_constant_columns: Vec<String>,
    pub correlation: Vec<Vec<f64>>,
    pub max_abs_pairwise_correlation: f64,
}

impl DatasetSummary {
    pub fn correlation_matrix(&self) -> DMatrix<f64> {
        let p = self.feature_count;
        DMatrix::from_fn(p, p, |i, j| self.correlation[i][j])
    }
}

/// Summary plus the standardized feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub summary: DatasetSummary,
    pub standardized: DMatrix<f64>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "NULL" | "null" | "?")
}

/// Reads a CSV table with a header row. Rejects missing and non-numeric
/// cells, drops constant columns, standardizes the rest and rejects the table
/// when two columns correlate beyond [`MAX_ABS_CORRELATION`].
pub fn ingest_reader<R: Read>(reader: R) -> Result<Dataset> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> =
        csv.headers().map_err(|e| Error::Dataset(e.to_string()))?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::Dataset("missing header row".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::Dataset(e.to_string()))?;
        let row = r + 1;
        for ((cell, name), col) in record.iter().zip(&headers).zip(columns.iter_mut()) {
            if is_missing(cell) {
                return Err(Error::MissingValue { row, column: name.clone() });
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => col.push(v),
                _ => return Err(Error::NonNumeric { row, column: name.clone(), value: cell.to_string() }),
            }
        }
    }
    let rows = columns[0].len();
    if rows < 3 {
        return Err(Error::Dataset(format!("need at least 3 rows, found {rows}")));
    }

    let mut kept = Vec::new();
    let mut names = Vec::new();
    let mut dropped = Vec::new();
    for (col, name) in columns.into_iter().zip(headers) {
        if col.iter().all(|&v| v == col[0]) {
            dropped.push(name);
        } else {
            kept.push(col);
            names.push(name);
        }
    }
    let p = kept.len();
    if p == 0 {
        return Err(Error::Dataset("every column is constant".into()));
    }

    let m = rows as f64;
    let mut z = DMatrix::zeros(rows, p);
    for (j, col) in kept.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / m;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
        if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
            return Err(Error::Dataset(format!("column '{}' cannot be standardized", names[j])));
        }
        for (i, v) in col.iter().enumerate() {
            z[(i, j)] = (v - mean) / sd;
        }
    }
    let corr = correlation(&z);
    let mut max_abs: f64 = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            let c = corr[(i, j)];
            if !c.is_finite() {
                return Err(Error::Dataset(format!("correlation of '{}' and '{}' is undefined", names[i], names[j])));
            }
            if c.abs() > MAX_ABS_CORRELATION {
                return Err(Error::CorrelationBound {
                    a: names[i].clone(),
                    b: names[j].clone(),
                    value: c,
                    bound: MAX_ABS_CORRELATION,
                });
            }
            max_abs = max_abs.max(c.abs());
        }
    }
    let summary = DatasetSummary {
        feature_count: p,
        row_count: rows,
        feature_names: names,
        dropped_constant_columns: dropped,
        correlation: (0..p).map(|i| (0..p).map(|j| corr[(i, j)]).collect()).collect(),
        max_abs_pairwise_correlation: max_abs,
    };
    Ok(Dataset { summary, standardized: z })
}

pub fn ingest_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(std::io::BufReader::new(file))
}

/// Sample correlation with an exact unit diagonal and exact symmetry.
fn correlation(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, p) = x.shape();
    let means: Vec<f64> = (0..p).map(|j| x.column(j).mean()).collect();
    let c = DMatrix::from_fn(m, p, |i, j| x[(i, j)] - means[j]);
    let cov = c.transpose() * &c;
    let mut r = DMatrix::identity(p, p);
    for i in 0..p {
        for j in (i + 1)..p {
            let v = (cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).clamp(-1.0, 1.0);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Writes the standardized columns as CSV with the kept feature names.
pub fn write_standardized<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&data.summary.feature_names).map_err(io)?;
    for row in data.standardized.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
