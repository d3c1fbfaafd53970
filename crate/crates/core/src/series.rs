//! Time-series panels: construction, CSV ingestion, and return transforms.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A T x N panel of observations. N = 1 for univariate series.
///
/// Immutable after construction; all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl SeriesMatrix {
    /// Build a panel from a T x N matrix and component labels.
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(
                "series must have at least one row and one column".into(),
            ));
        }
        if labels.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                values.ncols()
            )));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let t = idx % values.nrows();
            return Err(Error::NonFinite { time_index: t });
        }
        Ok(Self { values, labels })
    }

    /// Univariate helper: one column labelled `c1`.
    pub fn univariate(values: Vec<f64>) -> Result<Self> {
        let t = values.len();
        Self::new(DMatrix::from_vec(t, 1, values), vec!["c1".into()])
    }

    /// Build from row vectors (each of length N).
    pub fn from_rows(rows: &[DVector<f64>], labels: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("series must have at least one row".into()));
        }
        let n = rows[0].len();
        let mut values = DMatrix::zeros(rows.len(), n);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {t} has {} entries, expected {n}",
                    row.len()
                )));
            }
            values.row_mut(t).copy_from(&row.transpose());
        }
        Self::new(values, labels)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of time points T.
    pub fn length_t(&self) -> usize {
        self.values.nrows()
    }

    /// Number of components N.
    pub fn dim_n(&self) -> usize {
        self.values.ncols()
    }

    /// Observation at time `t` as a column vector.
    pub fn row(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// The last `p` observations, oldest first.
    pub fn tail_rows(&self, p: usize) -> Vec<DVector<f64>> {
        let t = self.length_t();
        (t - p..t).map(|i| self.row(i)).collect()
    }

    /// Sub-panel of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.length_t() {
            return Err(Error::InvalidInput(format!(
                "invalid row slice {start}..{end} for T={}",
                self.length_t()
            )));
        }
        Self::new(self.values.rows(start, end - start).into_owned(), self.labels.clone())
    }

    fn synthesized_labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("c{i}")).collect()
    }
}

/// Level-to-return transforms applied before modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    /// Identity.
    None,
    /// 100 * ln(y_t / y_{t-1}).
    LogReturnPct,
    /// ln(y_t / y_{t-1}).
    LogReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub kind: TransformKind,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        Self { kind }
    }
}

/// Options for [`load_csv_opts`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Treat the first column as a time index: validate it is strictly
    /// increasing, then drop it.
    pub time_column: bool,
}

/// Read a rectangular numeric CSV into a panel.
///
/// Columns are components, rows are time points in increasing order. Labels
/// come from the header when present, otherwise `c1..cN`. Row and column
/// numbers in errors are 1-based and count data rows only.
pub fn load_csv(path: &Path, has_header: bool) -> Result<SeriesMatrix> {
    load_csv_opts(
        path,
        CsvOptions {
            has_header,
            time_column: false,
        },
    )
}

pub fn load_csv_opts(path: &Path, opts: CsvOptions) -> Result<SeriesMatrix> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Option<Vec<String>> = if opts.has_header {
        Some(
            reader
                .headers()
                .map_err(|e| Error::Csv(e.to_string()))?
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row: row_no,
                expected,
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::NonNumericCell {
                row: row_no,
                col: j + 1,
                text: field.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::NonNumericCell {
                    row: row_no,
                    col: j + 1,
                    text: field.to_string(),
                });
            }
            row.push(value);
        }
        if opts.time_column {
            times.push(row.remove(0));
        }
        rows.push(row);
    }

    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::EmptyBody);
    }
    if opts.time_column {
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(
                    "time column is not strictly increasing".into(),
                ));
            }
        }
    }

    let t = rows.len();
    let n = rows[0].len();
    let labels = match header {
        Some(mut h) => {
            if opts.time_column {
                h.remove(0);
            }
            h
        }
        None => SeriesMatrix::synthesized_labels(n),
    };
    let values = DMatrix::from_fn(t, n, |r, c| rows[r][c]);
    SeriesMatrix::new(values, labels)
}

/// Apply a level transform componentwise.
///
/// Log transforms require strictly positive levels and T >= 2; the output
/// has T - 1 rows. `None` is the identity.
pub fn apply_transform(series: &SeriesMatrix, spec: TransformSpec) -> Result<SeriesMatrix> {
    match spec.kind {
        TransformKind::None => Ok(series.clone()),
        TransformKind::LogReturn | TransformKind::LogReturnPct => {
            let t = series.length_t();
            if t < 2 {
                return Err(Error::SeriesTooShort { needed: 2, have: t });
            }
            if let Some((idx, v)) = series
                .values()
                .iter()
                .enumerate()
                .find(|(_, v)| **v <= 0.0)
            {
                let row = idx % t;
                return Err(Error::InvalidInput(format!(
                    "log transform requires positive levels; found {v} at time {row}"
                )));
            }
            let scale = if spec.kind == TransformKind::LogReturnPct {
                100.0
            } else {
                1.0
            };
            let v = series.values();
            let out = DMatrix::from_fn(t - 1, series.dim_n(), |r, c| {
                scale * (v[(r + 1, c)] / v[(r, c)]).ln()
            });
            SeriesMatrix::new(out, series.labels().to_vec())
        }
    }
}
