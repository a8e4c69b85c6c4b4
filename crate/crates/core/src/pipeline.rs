//! End-to-end estimation pipeline: factor count, penalty selection,
//! penalized fit, clustering, group-number selection and the
//! post-grouping refit.

use crate::error::Result;
use crate::estimators::{pca_fit, ppca_fit};
use crate::factor_count::{default_r_max, ic2_select, FactorCountReport};
use crate::grouping::{
    ahc_complete_linkage, default_k_bar, loading_distances, select_group_count, AhcPath,
    GroupSelectionReport,
};
use crate::refit::postgroup_fit;
use crate::tuning::{cv_select_lambda_with, default_lambda_grid_with_zero, CvMode, CvReport};
use crate::types::{FactorFit, Panel, Partition};

/// How the penalty level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSelection {
    CrossValidated,
    Fixed(f64),
}

/// Knobs for [`fit_pipeline`]. `None` fields fall back to the documented
/// defaults (IC₂ with r_max = min(8, min(T,N)−1), the zero-prepended
/// default λ grid, K̄ = min(15, N)). `paper_grid` drops the prepended
/// λ = 0 when no explicit grid is given.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub r: Option<usize>,
    pub r_max: Option<usize>,
    pub lambda: LambdaSelection,
    pub lambda_grid: Option<Vec<f64>>,
    pub paper_grid: bool,
    pub folds: usize,
    pub cv_mode: CvMode,
    pub k_bar: Option<usize>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            r: None,
            r_max: None,
            lambda: LambdaSelection::CrossValidated,
            lambda_grid: None,
            paper_grid: false,
            folds: 20,
            cv_mode: CvMode::Cv2,
            k_bar: None,
        }
    }
}

/// Everything the pipeline produced, from the factor-count search to the
/// post-grouping fit.
#[derive(Debug, Clone)]
pub struct PipelineFit {
    pub r: usize,
    pub factor_report: Option<FactorCountReport>,
    pub cv: Option<CvReport>,
    pub lambda: f64,
    pub fit: FactorFit,
    pub path: AhcPath,
    pub selection: GroupSelectionReport,
    pub partition: Partition,
    pub postgroup: FactorFit,
}

/// Runs the full estimation chain on a panel.
pub fn fit_pipeline(panel: &Panel, options: &PipelineOptions) -> Result<PipelineFit> {
    let (t, n) = (panel.nrows(), panel.ncols());
    let k_bar = options.k_bar.unwrap_or_else(|| default_k_bar(n));

    let (r, factor_report) = match options.r {
        Some(r) => (r, None),
        None => {
            let r_max = options.r_max.unwrap_or_else(|| default_r_max(t, n));
            let report = ic2_select(panel, r_max)?;
            (report.r_hat, Some(report))
        }
    };

    let (lambda, cv) = match options.lambda {
        LambdaSelection::Fixed(lambda) => (lambda, None),
        LambdaSelection::CrossValidated => {
            let default_grid;
            let grid: &[f64] = match &options.lambda_grid {
                Some(grid) => grid,
                None => {
                    default_grid = if options.paper_grid {
                        crate::tuning::default_lambda_grid(n)
                    } else {
                        default_lambda_grid_with_zero(n)
                    };
                    &default_grid
                }
            };
            let report =
                cv_select_lambda_with(panel, r, grid, options.folds, options.cv_mode, k_bar)?;
            (report.lambda_hat, Some(report))
        }
    };

    // a fixed λ = 0 is an explicit request for the plain PCA estimator
    let fit = if lambda == 0.0 && matches!(options.lambda, LambdaSelection::Fixed(_)) {
        pca_fit(panel, r)?
    } else {
        ppca_fit(panel, r, lambda)?
    };

    let distances = loading_distances(fit.loadings());
    let path = ahc_complete_linkage(&distances);
    let selection = select_group_count(panel, fit.scores(), &path, k_bar)?;
    let partition = path.partition(selection.k_hat).clone();
    let postgroup = postgroup_fit(panel, &fit, &partition)?;

    Ok(PipelineFit {
        r,
        factor_report,
        cv,
        lambda,
        fit,
        path,
        selection,
        partition,
        postgroup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::FitMethod;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn grouped_panel(t: usize, per_group: usize, noise: f64, seed: u64) -> Panel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let f = DMatrix::from_fn(t, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = 3 * per_group;
        let mut b = DMatrix::zeros(n, 2);
        for i in 0..per_group {
            b[(i, 0)] = 2.0;
            b[(per_group + i, 1)] = 2.0;
            b[(2 * per_group + i, 0)] = 2.4;
            b[(2 * per_group + i, 1)] = 3.2;
        }
        let e = DMatrix::from_fn(t, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        Panel::from_values(&f * b.transpose() + e * noise).unwrap()
    }

    #[test]
    fn pipeline_recovers_grouped_structure() {
        let panel = grouped_panel(60, 8, 0.2, 5);
        let out = fit_pipeline(&panel, &PipelineOptions::default()).unwrap();
        assert_eq!(out.r, 2);
        assert_eq!(out.selection.k_hat, 3);
        assert_eq!(out.partition.k(), 3);
        assert_eq!(out.fit.method(), FitMethod::Ppca);
        assert_eq!(out.postgroup.method(), FitMethod::PostGroup);
        assert!(out.cv.is_some());
        assert!(out.factor_report.is_some());
    }

    #[test]
    fn fixed_lambda_zero_uses_pca() {
        let panel = grouped_panel(40, 6, 0.3, 9);
        let options = PipelineOptions {
            r: Some(2),
            lambda: LambdaSelection::Fixed(0.0),
            ..PipelineOptions::default()
        };
        let out = fit_pipeline(&panel, &options).unwrap();
        assert_eq!(out.fit.method(), FitMethod::Pca);
        assert!(out.cv.is_none());
        assert!(out.factor_report.is_none());
    }
}
