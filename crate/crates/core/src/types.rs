//! Shared domain types with validated construction.
//!
//! All types are immutable after construction and safe to share across
//! threads. Matrices are dense, real, double precision.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A T×N panel of observations: rows are time points, columns are series.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    values: DMatrix<f64>,
    time_labels: Vec<String>,
    series_names: Vec<String>,
}

impl Panel {
    /// Builds a panel, checking label lengths, minimum dimensions (T ≥ 2,
    /// N ≥ 2) and that every entry is finite.
    pub fn new(
        values: DMatrix<f64>,
        time_labels: Vec<String>,
        series_names: Vec<String>,
    ) -> Result<Self> {
        let (t, n) = (values.nrows(), values.ncols());
        if t < 2 || n < 2 {
            return Err(Error::DimensionMismatch(format!(
                "panel needs at least 2 rows and 2 columns, got {t}×{n}"
            )));
        }
        if time_labels.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "{} time labels for {t} rows",
                time_labels.len()
            )));
        }
        if series_names.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} series names for {n} columns",
                series_names.len()
            )));
        }
        for j in 0..n {
            for i in 0..t {
                if !values[(i, j)].is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
            }
        }
        Ok(Self {
            values,
            time_labels,
            series_names,
        })
    }

    /// Convenience constructor with generated labels `t0..` / `s0..`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let time_labels = (0..values.nrows()).map(|i| format!("t{i}")).collect();
        let series_names = (0..values.ncols()).map(|j| format!("s{j}")).collect();
        Self::new(values, time_labels, series_names)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    pub fn series_names(&self) -> &[String] {
        &self.series_names
    }

    /// New panel containing the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "row selection needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.nrows()) {
            return Err(Error::DimensionMismatch(format!(
                "row index {bad} out of range for {} rows",
                self.nrows()
            )));
        }
        let values = self.values.select_rows(rows.iter());
        let time_labels = rows.iter().map(|&r| self.time_labels[r].clone()).collect();
        Self::new(values, time_labels, self.series_names.clone())
    }
}

/// Estimator that produced a [`FactorFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    Pca,
    Ppca,
    PostGroup,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitMethod::Pca => write!(f, "PCA"),
            FitMethod::Ppca => write!(f, "PPCA"),
            FitMethod::PostGroup => write!(f, "POSTGROUP"),
        }
    }
}

/// Estimated factor scores (T×r) and loadings (N×r).
///
/// For `Pca` and `Ppca` fits the scores satisfy the identification
/// constraint scoresᵀ·scores / T = I_r; `PostGroup` scores come from a
/// cross-sectional regression and are not re-orthonormalized.
#[derive(Debug, Clone)]
pub struct FactorFit {
    scores: DMatrix<f64>,
    loadings: DMatrix<f64>,
    r: usize,
    lambda: f64,
    method: FitMethod,
}

impl FactorFit {
    pub fn new(
        scores: DMatrix<f64>,
        loadings: DMatrix<f64>,
        lambda: f64,
        method: FitMethod,
    ) -> Result<Self> {
        let r = scores.ncols();
        let t = scores.nrows();
        let n = loadings.nrows();
        if loadings.ncols() != r {
            return Err(Error::DimensionMismatch(format!(
                "scores have {r} columns but loadings have {}",
                loadings.ncols()
            )));
        }
        if r < 1 || r > t.min(n) {
            return Err(Error::DimensionMismatch(format!(
                "factor count {r} outside 1..=min(T={t}, N={n})"
            )));
        }
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be nonnegative, got {lambda}"
            )));
        }
        if matches!(method, FitMethod::Pca | FitMethod::Ppca) {
            let dev = orthonormality_defect(&scores);
            if dev > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "scores violate scoresᵀ·scores/T = I (max deviation {dev:.3e})"
                )));
            }
        }
        Ok(Self {
            scores,
            loadings,
            r,
            lambda,
            method,
        })
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn method(&self) -> FitMethod {
        self.method
    }
}

/// Max-abs deviation of scoresᵀ·scores/T from the identity.
pub(crate) fn orthonormality_defect(scores: &DMatrix<f64>) -> f64 {
    let t = scores.nrows() as f64;
    let gram = scores.transpose() * scores / t;
    let r = gram.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

/// Assignment of N series to K disjoint, exhaustive groups.
///
/// Group ids are canonicalized to 1..K by order of first appearance, so
/// partitions from different runs compare with plain equality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
    sizes: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary group labels to 1..K by first appearance.
    pub fn from_assignment(assignment: &[usize]) -> Result<Self> {
        if assignment.is_empty() {
            return Err(Error::EmptyAssignment);
        }
        let mut relabel: Vec<(usize, usize)> = Vec::new(); // (original, canonical)
        let mut canonical = Vec::with_capacity(assignment.len());
        for &raw in assignment {
            let id = match relabel.iter().find(|(orig, _)| *orig == raw) {
                Some((_, id)) => *id,
                None => {
                    let id = relabel.len() + 1;
                    relabel.push((raw, id));
                    id
                }
            };
            canonical.push(id);
        }
        let k = relabel.len();
        let mut sizes = vec![0usize; k];
        for &id in &canonical {
            sizes[id - 1] += 1;
        }
        Ok(Self {
            assignment: canonical,
            k,
            sizes,
        })
    }

    /// Number of series.
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Number of groups.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Canonical group ids, one per series, in 1..=k.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Group cardinalities, indexed by group id − 1.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn min_group_size(&self) -> usize {
        *self.sizes.iter().min().expect("partition has k >= 1 groups")
    }

    /// Member indices per group, indexed by group id − 1.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &id) in self.assignment.iter().enumerate() {
            out[id - 1].push(i);
        }
        out
    }
}

/// Symmetric N×N matrix of pairwise loading distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if d.nrows() != d.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "distance matrix must be square, got {}×{}",
                d.nrows(),
                d.ncols()
            )));
        }
        for i in 0..d.nrows() {
            if d[(i, i)] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "distance matrix diagonal entry ({i},{i}) is {}, expected 0",
                    d[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (d[(i, j)], d[(j, i)]);
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "distance entry ({i},{j}) = {a} is not a finite nonnegative value"
                    )));
                }
                if a != b {
                    return Err(Error::InvalidArgument(format!(
                        "distance matrix is asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
}

/// The systematic part Ĉ = scores·loadingsᵀ of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonComponents {
    c: DMatrix<f64>,
}

impl CommonComponents {
    pub(crate) fn from_matrix(c: DMatrix<f64>) -> Self {
        Self { c }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn nrows(&self) -> usize {
        self.c.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.c.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn labels(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn panel_identity_construction() {
        let p = Panel::new(
            dmatrix![1.0, 2.0; 3.0, 4.0],
            labels("t", 2),
            labels("s", 2),
        )
        .unwrap();
        assert_eq!(p.nrows(), 2);
        assert_eq!(p.ncols(), 2);
    }

    #[test]
    fn panel_rejects_nan() {
        let err = Panel::new(
            dmatrix![1.0, f64::NAN; 3.0, 4.0],
            labels("t", 2),
            labels("s", 2),
        )
        .unwrap_err();
        match err {
            Error::NonFiniteEntry { row, col } => {
                assert_eq!((row, col), (0, 1));
            }
            other => panic!("expected NonFiniteEntry, got {other:?}"),
        }
    }

    #[test]
    fn panel_rejects_label_mismatch() {
        let err = Panel::new(
            dmatrix![1.0, 2.0; 3.0, 4.0],
            labels("t", 3),
            labels("s", 2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn partition_relabels_by_first_appearance() {
        let p = Partition::from_assignment(&[7, 7, 3, 3]).unwrap();
        assert_eq!(p.assignment(), &[1, 1, 2, 2]);
        assert_eq!(p.k(), 2);
        assert_eq!(p.sizes(), &[2, 2]);

        let p = Partition::from_assignment(&[2, 1, 2]).unwrap();
        assert_eq!(p.assignment(), &[1, 2, 1]);
        assert_eq!(p.sizes(), &[2, 1]);
    }

    #[test]
    fn partition_singleton() {
        let p = Partition::from_assignment(&[1]).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.sizes(), &[1]);
    }

    #[test]
    fn partition_empty_errors() {
        assert!(matches!(
            Partition::from_assignment(&[]),
            Err(Error::EmptyAssignment)
        ));
    }

    #[test]
    fn distance_matrix_rejects_asymmetry() {
        let d = dmatrix![0.0, 1.0; 2.0, 0.0];
        assert!(DistanceMatrix::new(d).is_err());
    }

    proptest! {
        #[test]
        fn partition_canonicalization_idempotent(raw in prop::collection::vec(0usize..6, 1..40)) {
            let once = Partition::from_assignment(&raw).unwrap();
            let twice = Partition::from_assignment(once.assignment()).unwrap();
            prop_assert_eq!(&once, &twice);
        }

        #[test]
        fn partition_sizes_sum_and_max_id(raw in prop::collection::vec(0usize..6, 1..40)) {
            let p = Partition::from_assignment(&raw).unwrap();
            prop_assert_eq!(p.sizes().iter().sum::<usize>(), p.n());
            prop_assert_eq!(*p.assignment().iter().max().unwrap(), p.k());
        }
    }
}
