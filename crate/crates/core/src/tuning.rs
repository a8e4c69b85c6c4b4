//! Cross-validated selection of the penalty λ.
//!
//! Time rows are split into contiguous validation blocks. For each fold
//! and candidate λ the estimator is fit on the training rows; held-out
//! rows get factor scores by cross-sectional least squares on the trained
//! loadings, and the validation loss is the squared Frobenius
//! reconstruction error. CV1 scores the PPCA loadings directly, CV2 runs
//! the full grouping pipeline inside the fold and scores the
//! post-grouping loadings.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit_with_gram, GramCache};
use crate::grouping::{cluster_and_refit, default_k_bar};
use crate::refit::refit_factors_mat;
use crate::types::Panel;

/// Which reconstruction the validation loss scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvMode {
    /// PPCA loadings B̂(λ).
    Cv1,
    /// Post-grouping loadings B̃(λ) after AHC and IC(K) inside the fold.
    Cv2,
}

impl std::fmt::Display for CvMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CvMode::Cv1 => write!(f, "CV1"),
            CvMode::Cv2 => write!(f, "CV2"),
        }
    }
}

/// Outcome of a λ search: the winner plus the full (grid × folds) loss
/// matrix for audit.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub lambda_hat: f64,
    pub grid: Vec<f64>,
    pub cv_scores: DMatrix<f64>,
    pub mode: CvMode,
    pub folds: usize,
}

/// Candidate set {1/b : b = 0.05, 0.10, …, 1.00} ∪ {n}, deduplicated and
/// ascending.
pub fn default_lambda_grid(n: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=20).map(|i| 20.0 / i as f64).collect();
    grid.push(n as f64);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// Library default: λ = 0 prepended to [`default_lambda_grid`] so the
/// selected fit can never do worse than plain PCA under CV.
pub fn default_lambda_grid_with_zero(n: usize) -> Vec<f64> {
    let mut grid = default_lambda_grid(n);
    grid.insert(0, 0.0);
    grid
}

/// Contiguous validation blocks: the first `t % folds` blocks get one
/// extra row.
pub(crate) fn fold_blocks(t: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    let base = t / folds;
    let extra = t % folds;
    let mut blocks = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        blocks.push(start..start + len);
        start += len;
    }
    blocks
}

/// Selects λ̂ = argmin of the fold-summed validation loss (exact ties go
/// to the smallest λ). Uses the default group-count ceiling for CV2.
pub fn cv_select_lambda(
    panel: &Panel,
    r: usize,
    grid: &[f64],
    folds: usize,
    mode: CvMode,
) -> Result<CvReport> {
    cv_select_lambda_with(panel, r, grid, folds, mode, default_k_bar(panel.ncols()))
}

pub(crate) fn cv_select_lambda_with(
    panel: &Panel,
    r: usize,
    grid: &[f64],
    folds: usize,
    mode: CvMode,
    k_bar: usize,
) -> Result<CvReport> {
    let t = panel.nrows();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if let Some(&bad) = grid.iter().find(|&&l| !l.is_finite() || l < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda grid contains invalid value {bad}"
        )));
    }
    if folds < 2 || folds > t {
        return Err(Error::InvalidArgument(format!(
            "folds = {folds} outside 2..=T = {t}"
        )));
    }
    let blocks = fold_blocks(t, folds);

    let fold_losses: Vec<Result<Vec<f64>>> = blocks
        .par_iter()
        .map(|block| fold_loss_column(panel, r, grid, mode, k_bar, block))
        .collect();

    let mut cv_scores = DMatrix::zeros(grid.len(), folds);
    for (f, column) in fold_losses.into_iter().enumerate() {
        let column = column?;
        for (gi, loss) in column.into_iter().enumerate() {
            cv_scores[(gi, f)] = loss;
        }
    }

    let mut best = 0;
    let mut best_total = f64::INFINITY;
    for gi in 0..grid.len() {
        let total: f64 = (0..folds).map(|f| cv_scores[(gi, f)]).sum();
        if total < best_total || (total == best_total && grid[gi] < grid[best]) {
            best = gi;
            best_total = total;
        }
    }
    Ok(CvReport {
        lambda_hat: grid[best],
        grid: grid.to_vec(),
        cv_scores,
        mode,
        folds,
    })
}

fn fold_loss_column(
    panel: &Panel,
    r: usize,
    grid: &[f64],
    mode: CvMode,
    k_bar: usize,
    block: &std::ops::Range<usize>,
) -> Result<Vec<f64>> {
    let t = panel.nrows();
    let train_rows: Vec<usize> = (0..t).filter(|i| !block.contains(i)).collect();
    if train_rows.len() < r + 1 {
        return Err(Error::InsufficientRows {
            rows: train_rows.len(),
            need: r + 1,
        });
    }
    let val_rows: Vec<usize> = block.clone().collect();
    let train_panel = panel.select_rows(&train_rows)?;
    let x_train = train_panel.values();
    let x_val = panel.values().select_rows(val_rows.iter());
    let cache = GramCache::new(x_train);

    let mut column = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let (scores, loadings) = fit_with_gram(x_train, &cache, r, lambda)?;
        let trained = match mode {
            CvMode::Cv1 => loadings,
            CvMode::Cv2 => {
                let (_, _, post) = cluster_and_refit(&train_panel, &scores, &loadings, k_bar)?;
                post
            }
        };
        let val_scores = refit_factors_mat(&x_val, &trained)?;
        let resid = &x_val - val_scores * trained.transpose();
        column.push(resid.norm_squared());
    }
    Ok(column)
}
