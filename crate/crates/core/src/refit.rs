//! Post-grouping re-estimation: group-mean loadings and cross-sectional
//! least-squares factor scores.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{FactorFit, FitMethod, Panel, Partition};

const MAX_CONDITION: f64 = 1e12;

/// Shared loading per group, b̃_k = (T·|G_k|)⁻¹·F̂ᵀ·Σ_{i∈G_k} x_i,
/// broadcast to every member row. Rows within a group are bit-identical.
pub fn postgroup_loadings(
    panel: &Panel,
    scores: &DMatrix<f64>,
    partition: &Partition,
) -> Result<DMatrix<f64>> {
    check_dims(panel, scores, Some(partition))?;
    debug_assert!(
        crate::types::orthonormality_defect(scores) < 1e-6,
        "post-grouping loadings assume scoresᵀ·scores/T = I"
    );
    Ok(postgroup_loadings_mat(panel.values(), scores, partition))
}

pub(crate) fn postgroup_loadings_mat(
    x: &DMatrix<f64>,
    scores: &DMatrix<f64>,
    partition: &Partition,
) -> DMatrix<f64> {
    let (t, n) = (x.nrows(), x.ncols());
    let r = scores.ncols();
    let mut loadings = DMatrix::zeros(n, r);
    for (g, members) in partition.groups().iter().enumerate() {
        let _ = g;
        let mut summed = nalgebra::DVector::zeros(t);
        for &i in members {
            summed += x.column(i);
        }
        let shared = scores.transpose() * summed / (t as f64 * members.len() as f64);
        for &i in members {
            for l in 0..r {
                loadings[(i, l)] = shared[l];
            }
        }
    }
    loadings
}

/// Cross-sectional least squares per time point: F̃ = X·B̃·(B̃ᵀB̃)⁻¹.
pub fn refit_factors(panel: &Panel, loadings: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if loadings.nrows() != panel.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "loadings have {} rows for a panel with {} series",
            loadings.nrows(),
            panel.ncols()
        )));
    }
    refit_factors_mat(panel.values(), loadings)
}

pub(crate) fn refit_factors_mat(
    x: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let normal = loadings.transpose() * loadings;
    let eig = nalgebra::SymmetricEigen::new(normal);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        return Err(Error::SingularLoadings { cond });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let inverse = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(x * loadings * inverse)
}

/// Composes [`postgroup_loadings`] and [`refit_factors`]; λ is carried
/// over from the originating fit.
pub fn postgroup_fit(panel: &Panel, fit: &FactorFit, partition: &Partition) -> Result<FactorFit> {
    let loadings = postgroup_loadings(panel, fit.scores(), partition)?;
    let scores = refit_factors(panel, &loadings)?;
    FactorFit::new(scores, loadings, fit.lambda(), FitMethod::PostGroup)
}

fn check_dims(panel: &Panel, scores: &DMatrix<f64>, partition: Option<&Partition>) -> Result<()> {
    if scores.nrows() != panel.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "scores have {} rows for a panel with {} time points",
            scores.nrows(),
            panel.nrows()
        )));
    }
    if let Some(p) = partition {
        if p.n() != panel.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "partition covers {} series but panel has {}",
                p.n(),
                panel.ncols()
            )));
        }
    }
    Ok(())
}
