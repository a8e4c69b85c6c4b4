//! Penalized principal component analysis for approximate factor models
//! with latent group structure.
//!
//! The estimation chain: fit factor scores and loadings by PCA or by the
//! closed-form fusion-penalized PCA, cluster series by complete-linkage
//! agglomerative clustering on pairwise ℓ₁ loading distances, pick the
//! group count with an information criterion, then re-estimate loadings
//! as group means and scores by cross-sectional least squares. The crate
//! also ships the penalty cross-validation, a Bai–Ng factor-count
//! criterion, a seeded Monte-Carlo lab and a rolling out-of-sample
//! forecast evaluation for real panels.

pub mod error;
pub mod estimators;
pub mod factor_count;
pub mod forecast;
pub mod grouping;
pub mod io;
pub mod pipeline;
pub mod refit;
pub mod simlab;
pub mod tuning;
pub mod types;

pub use error::{Error, Result};
pub use estimators::{common_components, oracle_lambda, pca_fit, ppca_fit, ShrinkOperator};
pub use factor_count::{default_r_max, ic2_select, FactorCountReport};
pub use forecast::{ospe_rolling, ospe_score, ForecastMethod, OspeReport};
pub use grouping::{
    ahc_complete_linkage, default_k_bar, goodness_of_fit, loading_distances, rho_default,
    select_group_count, AhcPath, GroupSelectionReport, MergeStep,
};
pub use io::{load_csv_panel, standardize, write_panel_csv, StandardizationParams};
pub use pipeline::{fit_pipeline, LambdaSelection, PipelineFit, PipelineOptions};
pub use refit::{postgroup_fit, postgroup_loadings, refit_factors};
pub use simlab::{
    clustering_indexes, gen_ar1_factors, gen_banded, mse_common, run_replications, simulate,
    subspace_distance, summary_csv_row, ClusteringIndexes, RepSummary, Scenario, ScenarioConfig,
    SimDraw, SUMMARY_CSV_HEADER,
};
pub use tuning::{
    cv_select_lambda, default_lambda_grid, default_lambda_grid_with_zero, CvMode, CvReport,
};
pub use types::{CommonComponents, DistanceMatrix, FactorFit, FitMethod, Panel, Partition};
