//! Rolling out-of-sample prediction.
//!
//! For each evaluation month the pipeline is refit on an expanding
//! training window (re-standardized each step, no look-ahead), held-out
//! daily scores come from cross-sectional least squares on the trained
//! post-grouping loadings, and the month's OSPE is the mean squared
//! forecast error on the standardized scale. The month is then appended
//! to the training window.

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io::{parse_date, standardize};
use crate::pipeline::{fit_pipeline, LambdaSelection, PipelineOptions};
use crate::refit::refit_factors_mat;
use crate::types::Panel;

/// Forecasting estimator: plain-PCA initial values (the clustering
/// baseline) or the penalized fit with cross-validated λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMethod {
    PcaTw,
    Ppca,
}

impl std::fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForecastMethod::PcaTw => write!(f, "PCA_TW"),
            ForecastMethod::Ppca => write!(f, "PPCA"),
        }
    }
}

/// Per-month out-of-sample prediction errors, on the standardized scale
/// of the training window that produced each forecast (the scale the
/// reference monthly error tables use).
#[derive(Debug, Clone)]
pub struct OspeReport {
    pub months: Vec<String>,
    pub ospe: Vec<f64>,
    pub method: ForecastMethod,
}

/// `YYYY-MM` key of a date.
pub fn month_key(date: NaiveDate) -> String {
    format!("{:04}-{:02}", date.year(), date.month())
}

/// Squared forecast error per observation when rows of `values` are
/// reconstructed through cross-sectional least squares on `loadings`:
/// Σ (x_ti − x̂_ti)² / (N·|rows|).
pub fn ospe_score(values: &DMatrix<f64>, loadings: &DMatrix<f64>) -> Result<f64> {
    let scores = refit_factors_mat(values, loadings)?;
    let resid = values - scores * loadings.transpose();
    Ok(resid.norm_squared() / (values.nrows() * values.ncols()) as f64)
}

/// Expanding-window monthly evaluation between `train_start..=train_end`
/// and the listed `YYYY-MM` months (ascending, after the window).
pub fn ospe_rolling(
    panel: &Panel,
    train_start: &str,
    train_end: &str,
    eval_months: &[String],
    method: ForecastMethod,
    options: &PipelineOptions,
) -> Result<OspeReport> {
    let start = parse_date(train_start).ok_or_else(|| {
        Error::InvalidArgument(format!("cannot parse train start date {train_start:?}"))
    })?;
    let end = parse_date(train_end).ok_or_else(|| {
        Error::InvalidArgument(format!("cannot parse train end date {train_end:?}"))
    })?;
    if start > end {
        return Err(Error::InvalidArgument(format!(
            "train window {train_start}..{train_end} is reversed"
        )));
    }
    if eval_months.is_empty() {
        return Err(Error::InvalidArgument("no evaluation months given".into()));
    }
    for w in eval_months.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidArgument(format!(
                "evaluation months must be strictly ascending: {} then {}",
                w[0], w[1]
            )));
        }
    }
    if eval_months[0].as_str() <= month_key(end).as_str() {
        return Err(Error::InvalidArgument(format!(
            "first evaluation month {} does not follow the training window ending {train_end}",
            eval_months[0]
        )));
    }

    let dates: Vec<NaiveDate> = panel
        .time_labels()
        .iter()
        .map(|label| {
            parse_date(label).ok_or_else(|| {
                Error::InvalidArgument(format!("cannot parse panel date label {label:?}"))
            })
        })
        .collect::<Result<_>>()?;

    let mut train_rows: Vec<usize> = (0..panel.nrows())
        .filter(|&i| dates[i] >= start && dates[i] <= end)
        .collect();
    if train_rows.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "training window {train_start}..{train_end} covers {} panel rows",
            train_rows.len()
        )));
    }

    let mut month_options = options.clone();
    month_options.lambda = match method {
        ForecastMethod::Ppca => LambdaSelection::CrossValidated,
        ForecastMethod::PcaTw => LambdaSelection::Fixed(0.0),
    };

    let mut ospe = Vec::with_capacity(eval_months.len());
    for month in eval_months {
        let val_rows: Vec<usize> = (0..panel.nrows())
            .filter(|&i| month_key(dates[i]) == *month)
            .collect();
        if val_rows.is_empty() {
            return Err(Error::EmptyMonth {
                month: month.clone(),
            });
        }

        let train_panel = panel.select_rows(&train_rows)?;
        let (train_std, params) = standardize(&train_panel)?;
        let fitted = fit_pipeline(&train_std, &month_options)?;

        let x_val = panel.values().select_rows(val_rows.iter());
        let x_val_std = params.apply(&x_val)?;
        ospe.push(ospe_score(&x_val_std, fitted.postgroup.loadings())?);

        train_rows.extend(val_rows);
        train_rows.sort_unstable();
    }

    Ok(OspeReport {
        months: eval_months.to_vec(),
        ospe,
        method,
    })
}
