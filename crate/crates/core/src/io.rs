//! CSV panel ingestion and column standardization.
//!
//! Input files have a date column (ISO-8601 `YYYY-MM-DD` or compact
//! `YYYYMMDD`) followed by numeric series columns, with a header row.
//! Rows containing missing cells or the source sentinels −99.99 / −999
//! are dropped with a logged count. Lines starting with `#` are
//! metadata comments and are skipped, so this loader round-trips the
//! panels written by [`write_panel_csv`].

use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::Panel;

/// Per-column mean and sample standard deviation (T−1 denominator) used
/// to z-score a panel and to map new rows onto the same scale.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationParams {
    /// z-scores a raw T×N matrix with these parameters.
    pub fn apply(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(values)?;
        let mut out = values.clone();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] = (out[(i, j)] - self.means[j]) / self.sds[j];
            }
        }
        Ok(out)
    }

    /// Undoes [`StandardizationParams::apply`].
    pub fn invert(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_width(values)?;
        let mut out = values.clone();
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] = out[(i, j)] * self.sds[j] + self.means[j];
            }
        }
        Ok(out)
    }

    fn check_width(&self, values: &DMatrix<f64>) -> Result<()> {
        if values.ncols() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "parameters cover {} columns but matrix has {}",
                self.means.len(),
                values.ncols()
            )));
        }
        Ok(())
    }
}

/// Parses a date label, accepting `YYYY-MM-DD` or `YYYYMMDD`.
pub fn parse_date(label: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(label, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(label, "%Y%m%d"))
        .ok()
}

fn is_missing_cell(raw: &str, value: Option<f64>) -> bool {
    if raw.trim().is_empty() {
        return true;
    }
    matches!(value, Some(v) if v == -99.99 || v == -999.0)
}

/// Loads a CSV panel. `date_column` names the date column (default: the
/// first column); the remaining columns become series. Rows are sorted
/// ascending by date.
pub fn load_csv_panel(path: &Path, date_column: Option<&str>) -> Result<Panel> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if headers.is_empty() {
        return Err(Error::ParseError {
            row: 0,
            col: "<header>".into(),
            message: "empty header row".into(),
        });
    }
    let date_idx = match date_column {
        None => 0,
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::ParseError {
                row: 0,
                col: name.to_owned(),
                message: "date column not found in header".into(),
            })?,
    };
    let series_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if series_names.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "panel needs at least 2 series columns, found {}",
            series_names.len()
        )));
    }

    let mut rows: Vec<(Option<NaiveDate>, String, Vec<f64>)> = Vec::new();
    let mut dropped = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let data_row = row_idx + 1; // 1-based, after the header
        let label = record
            .get(date_idx)
            .ok_or_else(|| Error::ParseError {
                row: data_row,
                col: headers[date_idx].clone(),
                message: "missing date cell".into(),
            })?
            .to_owned();
        let mut values = Vec::with_capacity(series_names.len());
        let mut missing = false;
        for (col_idx, header) in headers.iter().enumerate() {
            if col_idx == date_idx {
                continue;
            }
            let raw = record.get(col_idx).unwrap_or("");
            let parsed = raw.trim().parse::<f64>().ok();
            if is_missing_cell(raw, parsed) {
                missing = true;
                continue;
            }
            match parsed {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::ParseError {
                        row: data_row,
                        col: header.clone(),
                        message: format!("cannot parse {raw:?} as a number"),
                    })
                }
            }
        }
        if missing {
            dropped += 1;
            continue;
        }
        rows.push((parse_date(&label), label, values));
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows containing missing values");
    }
    if rows.is_empty() {
        return Err(Error::NoRowsRemaining);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let t = rows.len();
    let n = series_names.len();
    let mut values = DMatrix::zeros(t, n);
    let mut time_labels = Vec::with_capacity(t);
    for (i, (_, label, row)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            values[(i, j)] = v;
        }
        time_labels.push(label);
    }
    Panel::new(values, time_labels, series_names)
}

/// Column-wise z-scores; the returned parameters invert the transform.
pub fn standardize(panel: &Panel) -> Result<(Panel, StandardizationParams)> {
    let x = panel.values();
    let (t, n) = (x.nrows(), x.ncols());
    let mut means = Vec::with_capacity(n);
    let mut sds = Vec::with_capacity(n);
    for j in 0..n {
        let mean = x.column(j).sum() / t as f64;
        let ss: f64 = x.column(j).iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (t as f64 - 1.0)).sqrt();
        if sd == 0.0 {
            return Err(Error::ZeroVariance {
                name: panel.series_names()[j].clone(),
            });
        }
        means.push(mean);
        sds.push(sd);
    }
    let params = StandardizationParams { means, sds };
    let standardized = Panel::new(
        params.apply(x)?,
        panel.time_labels().to_vec(),
        panel.series_names().to_vec(),
    )?;
    Ok((standardized, params))
}

/// Writes a panel as CSV with optional `#`-prefixed metadata lines, in
/// the layout [`load_csv_panel`] reads back.
pub fn write_panel_csv<W: Write>(panel: &Panel, metadata: &[String], out: &mut W) -> Result<()> {
    for line in metadata {
        writeln!(out, "# {line}")?;
    }
    write!(out, "date")?;
    for name in panel.series_names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for i in 0..panel.nrows() {
        write!(out, "{}", panel.time_labels()[i])?;
        for j in 0..panel.ncols() {
            write!(out, ",{}", panel.values()[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
