//! Conventional PCA and closed-form penalized PCA (PPCA).
//!
//! The penalized problem adds a pairwise fusion penalty Σ_{i<j}‖b_i−b_j‖₂²
//! to the PCA loss. Writing the penalty through the complete-graph
//! Laplacian and absorbing it into D = I + λ·Π_N gives a closed form:
//! scores are √T times the leading r eigenvectors of X·D⁻¹·Xᵀ and
//! loadings are D⁻¹·Xᵀ·scores / T. Since D⁻¹ is identity-plus-rank-one,
//! neither D nor D⁻¹ is ever materialized: X·D⁻¹·Xᵀ is assembled from
//! the Gram matrix X·Xᵀ and the row-sum vector s = X·𝟙.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{CommonComponents, FactorFit, FitMethod, Panel};

/// The operator D⁻¹ = (λ/((1+λ)N))·𝟙𝟙ᵀ + (1/(1+λ))·I_N, stored as (λ, N).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkOperator {
    lambda: f64,
    n: usize,
}

impl ShrinkOperator {
    pub fn new(lambda: f64, n: usize) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        if n < 1 {
            return Err(Error::InvalidArgument("shrink operator needs N >= 1".into()));
        }
        Ok(Self { lambda, n })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Applies D⁻¹ to an N×m matrix in O(N·m) without forming D⁻¹.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "operator is over N = {} but matrix has {} rows",
                self.n,
                m.nrows()
            )));
        }
        let diag_coef = 1.0 / (1.0 + self.lambda);
        let ones_coef = self.lambda / ((1.0 + self.lambda) * self.n as f64);
        let mut out = m * diag_coef;
        for j in 0..m.ncols() {
            let col_sum: f64 = m.column(j).iter().sum();
            let shift = ones_coef * col_sum;
            for i in 0..self.n {
                out[(i, j)] += shift;
            }
        }
        Ok(out)
    }
}

/// Eigenvalues in descending order with matching eigenvector columns.
/// Ties keep the eigensolver's order (stable sort).
pub(crate) fn sorted_symmetric_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 100_000)
        .ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("symmetric eigenvalues are finite")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(dim, dim);
    for (j, &i) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Flips each column so its largest-absolute-value entry is positive;
/// ties go to the lowest index.
pub(crate) fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let col = m.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Precomputed pieces of X·D⁻¹·Xᵀ shared across λ values: the Gram matrix
/// G = X·Xᵀ and the row-sum vector s = X·𝟙.
pub(crate) struct GramCache {
    pub gram: DMatrix<f64>,
    pub row_sums: DVector<f64>,
}

impl GramCache {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let gram = x * x.transpose();
        let row_sums = DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.iter().sum()));
        Self { gram, row_sums }
    }
}

/// Shared PCA/PPCA fit on a raw data matrix given its Gram cache.
pub(crate) fn fit_with_gram(
    x: &DMatrix<f64>,
    cache: &GramCache,
    r: usize,
    lambda: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (t, n) = (x.nrows(), x.ncols());
    if r < 1 || r > t.min(n) {
        return Err(Error::InvalidArgument(format!(
            "factor count {r} outside 1..=min(T={t}, N={n})"
        )));
    }
    let target = if lambda == 0.0 {
        cache.gram.clone()
    } else {
        let diag_coef = 1.0 / (1.0 + lambda);
        let ones_coef = lambda / ((1.0 + lambda) * n as f64);
        let mut m = &cache.gram * diag_coef;
        // rank-one term (λ/((1+λ)N))·s·sᵀ
        for j in 0..t {
            for i in 0..t {
                m[(i, j)] += ones_coef * cache.row_sums[i] * cache.row_sums[j];
            }
        }
        m
    };
    let (values, vectors) = sorted_symmetric_eigen(target)?;
    let positive = values
        .iter()
        .take_while(|&&v| v > rank_threshold(&values, t, n))
        .count();
    if positive < r {
        return Err(Error::RankDeficient {
            requested: r,
            positive,
            eigenvalues: values.iter().take(r.min(values.len())).copied().collect(),
        });
    }
    let sqrt_t = (t as f64).sqrt();
    let mut scores = DMatrix::zeros(t, r);
    for j in 0..r {
        scores.set_column(j, &vectors.column(j));
    }
    scores *= sqrt_t;
    fix_column_signs(&mut scores);
    let shrink = ShrinkOperator::new(lambda, n)?;
    let loadings = shrink.apply(&(x.transpose() * &scores))? / t as f64;
    Ok((scores, loadings))
}

fn rank_threshold(values: &[f64], t: usize, n: usize) -> f64 {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    top * t.max(n) as f64 * f64::EPSILON
}

/// Conventional PCA: scores are √T times the leading r eigenvectors of
/// X·Xᵀ (descending eigenvalues), loadings are Xᵀ·scores/T.
pub fn pca_fit(panel: &Panel, r: usize) -> Result<FactorFit> {
    let x = panel.values();
    let cache = GramCache::new(x);
    let (scores, loadings) = fit_with_gram(x, &cache, r, 0.0)?;
    FactorFit::new(scores, loadings, 0.0, FitMethod::Pca)
}

/// Penalized PCA at penalty level λ ≥ 0 (λ = 0 reduces to [`pca_fit`]).
pub fn ppca_fit(panel: &Panel, r: usize, lambda: f64) -> Result<FactorFit> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    let x = panel.values();
    let cache = GramCache::new(x);
    let (scores, loadings) = fit_with_gram(x, &cache, r, lambda)?;
    FactorFit::new(scores, loadings, lambda, FitMethod::Ppca)
}

/// Ĉ = scores·loadingsᵀ.
pub fn common_components(fit: &FactorFit) -> CommonComponents {
    CommonComponents::from_matrix(fit.scores() * fit.loadings().transpose())
}

/// Rate-optimal tuning value N/(T·‖B*‖²_F) where B* removes the
/// cross-sectional mean loading from every row. Returns `f64::INFINITY`
/// when the loadings are homogeneous (‖B*‖ vanishes at machine precision).
pub fn oracle_lambda(true_loadings: &DMatrix<f64>, t: usize) -> f64 {
    let (n, r) = (true_loadings.nrows(), true_loadings.ncols());
    let mut centered_ss = 0.0;
    let mut total_ss = 0.0;
    for l in 0..r {
        let mean = true_loadings.column(l).iter().sum::<f64>() / n as f64;
        for i in 0..n {
            let v = true_loadings[(i, l)];
            centered_ss += (v - mean) * (v - mean);
            total_ss += v * v;
        }
    }
    if centered_ss <= total_ss * 1e-28 {
        return f64::INFINITY;
    }
    n as f64 / (t as f64 * centered_ss)
}
