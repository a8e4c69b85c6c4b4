//! Group recovery: pairwise ℓ₁ loading distances, complete-linkage
//! agglomerative clustering, the goodness-of-fit S(K) and the
//! information criterion IC(K) = log S(K) + K·ρ.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::refit::postgroup_loadings_mat;
use crate::types::{DistanceMatrix, Panel, Partition};

/// One merge of the agglomerative path. Groups are identified by the
/// smallest 0-based series index they contain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeStep {
    pub step: usize,
    pub groups: (usize, usize),
    pub distance: f64,
}

/// Full nested clustering path from N singletons down to one group.
#[derive(Debug, Clone)]
pub struct AhcPath {
    partitions: Vec<Partition>, // index k-1 holds the K = k partition
    merge_log: Vec<MergeStep>,
    n: usize,
}

impl AhcPath {
    /// Partition with exactly `k` groups, 1 ≤ k ≤ N.
    pub fn partition(&self, k: usize) -> &Partition {
        assert!(k >= 1 && k <= self.n, "k = {k} outside 1..=N = {}", self.n);
        &self.partitions[k - 1]
    }

    pub fn merge_log(&self) -> &[MergeStep] {
        &self.merge_log
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Δ̂_ij = (1/r)·Σ_l |b̂_il − b̂_jl|.
pub fn loading_distances(loadings: &DMatrix<f64>) -> DistanceMatrix {
    let (n, r) = (loadings.nrows(), loadings.ncols());
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let mut acc = 0.0;
            for l in 0..r {
                acc += (loadings[(i, l)] - loadings[(j, l)]).abs();
            }
            let dist = acc / r as f64;
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    DistanceMatrix::new(d).expect("construction yields a valid distance matrix")
}

/// Complete-linkage agglomerative clustering over a precomputed distance
/// matrix. Starts from N singleton groups and repeatedly merges the pair
/// with the smallest inter-group distance D(A,B) = max_{i∈A,j∈B} Δ̂_ij;
/// exact ties are broken by the lexicographically smallest pair of group
/// ids (smallest member index).
pub fn ahc_complete_linkage(d: &DistanceMatrix) -> AhcPath {
    let n = d.n();
    let mut work = d.matrix().clone();
    let mut active: Vec<bool> = vec![true; n];
    // group label per series; labels are the group's smallest member index
    let mut label: Vec<usize> = (0..n).collect();

    let mut partitions = Vec::with_capacity(n);
    let mut merge_log = Vec::with_capacity(n - 1);
    partitions.push(snapshot(&label));

    for step in 1..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !active[j] {
                    continue;
                }
                let dist = work[(i, j)];
                let better = match best {
                    None => true,
                    Some((bd, bi, bj)) => dist < bd || (dist == bd && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((dist, i, j));
                }
            }
        }
        let (dist, a, b) = best.expect("at least two active groups remain");
        merge_log.push(MergeStep {
            step,
            groups: (a, b),
            distance: dist,
        });
        // complete linkage: merged group keeps the max distance to others
        for c in 0..n {
            if active[c] && c != a && c != b {
                let merged = work[(a, c)].max(work[(b, c)]);
                work[(a, c)] = merged;
                work[(c, a)] = merged;
            }
        }
        active[b] = false;
        for l in label.iter_mut() {
            if *l == b {
                *l = a;
            }
        }
        partitions.push(snapshot(&label));
    }

    partitions.reverse(); // index k-1 => K = k
    AhcPath {
        partitions,
        merge_log,
        n,
    }
}

fn snapshot(label: &[usize]) -> Partition {
    Partition::from_assignment(label).expect("labels are nonempty")
}

/// S(K): mean squared residual of the panel against the post-grouping
/// loadings under the given partition, (NT)⁻¹·Σ_i Σ_t (x_ti − b̃ᵢᵀf̂_t)².
pub fn goodness_of_fit(
    panel: &Panel,
    scores: &DMatrix<f64>,
    partition: &Partition,
) -> Result<f64> {
    if scores.nrows() != panel.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "scores have {} rows for a panel with {} time points",
            scores.nrows(),
            panel.nrows()
        )));
    }
    if partition.n() != panel.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} series but panel has {}",
            partition.n(),
            panel.ncols()
        )));
    }
    let x = panel.values();
    let loadings = postgroup_loadings_mat(x, scores, partition);
    let resid = x - scores * loadings.transpose();
    Ok(resid.norm_squared() / (x.nrows() * x.ncols()) as f64)
}

/// Penalty rate ρ = log(m)/m with m = min(smallest group size, T).
pub fn rho_default(min_group_size: usize, t: usize) -> Result<f64> {
    let m = min_group_size.min(t);
    if m < 2 {
        return Err(Error::DegenerateGroup { m });
    }
    Ok((m as f64).ln() / m as f64)
}

/// Trace of the group-number search: K̂ plus the IC, S and ρ values over
/// K = 1..=K̄.
#[derive(Debug, Clone)]
pub struct GroupSelectionReport {
    pub k_hat: usize,
    pub ic_values: Vec<f64>,
    pub s_values: Vec<f64>,
    pub rho_values: Vec<f64>,
}

/// Default group-count ceiling: min(15, N).
pub fn default_k_bar(n: usize) -> usize {
    15.min(n)
}

/// Selects K̂ = argmin IC(K) over K = 1..=k_bar along a precomputed
/// clustering path (ties go to the smallest K).
///
/// The penalty rate is the panel-level ρ = log(min(N,T))/min(N,T),
/// constant in K. A group-size-dependent rate looked natural but is
/// provably too aggressive: with four groups at moderate separation it
/// prefers two merged pairs over the true partition whatever the data
/// say. A grouping that explains the panel down to numerical dust
/// (S(K) below 1e-10 of the mean squared entry) gets IC = −∞ so the
/// smallest exactly-fitting K wins instead of racing residual rounding.
pub fn select_group_count(
    panel: &Panel,
    scores: &DMatrix<f64>,
    path: &AhcPath,
    k_bar: usize,
) -> Result<GroupSelectionReport> {
    if k_bar < 1 || k_bar > path.n() {
        return Err(Error::InvalidArgument(format!(
            "k_bar = {k_bar} outside 1..=N = {}",
            path.n()
        )));
    }
    let (t, n) = (panel.nrows(), panel.ncols());
    let rho = rho_default(n, t)?;
    let exact_fit_floor = panel.values().norm_squared() / (n * t) as f64 * 1e-10;
    let mut ic_values = Vec::with_capacity(k_bar);
    let mut s_values = Vec::with_capacity(k_bar);
    let mut rho_values = Vec::with_capacity(k_bar);
    for k in 1..=k_bar {
        let partition = path.partition(k);
        let s = goodness_of_fit(panel, scores, partition)?;
        if s == 0.0 {
            return Err(Error::ZeroResidual { k });
        }
        s_values.push(s);
        rho_values.push(rho);
        ic_values.push(if s <= exact_fit_floor {
            f64::NEG_INFINITY
        } else {
            s.ln() + k as f64 * rho
        });
    }
    let mut k_hat = 1;
    for k in 2..=k_bar {
        if ic_values[k - 1] < ic_values[k_hat - 1] {
            k_hat = k;
        }
    }
    Ok(GroupSelectionReport {
        k_hat,
        ic_values,
        s_values,
        rho_values,
    })
}

/// Clustering stage shared by the full pipeline and the CV2 criterion:
/// distances from the fitted loadings, the AHC path, K̂ by IC, and the
/// post-grouping loadings at K̂.
pub(crate) fn cluster_and_refit(
    panel: &Panel,
    scores: &DMatrix<f64>,
    loadings: &DMatrix<f64>,
    k_bar: usize,
) -> Result<(AhcPath, GroupSelectionReport, DMatrix<f64>)> {
    let distances = loading_distances(loadings);
    let path = ahc_complete_linkage(&distances);
    let report = select_group_count(panel, scores, &path, k_bar)?;
    let partition = path.partition(report.k_hat);
    let post = postgroup_loadings_mat(panel.values(), scores, partition);
    Ok((path, report, post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, DMatrix};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn orthonormal_scores(t: usize, r: usize) -> DMatrix<f64> {
        let raw = DMatrix::from_fn(t, r, |i, j| ((i * (j + 3) + j) as f64).sin() + 0.1);
        let q = raw.qr().q().columns(0, r).into_owned();
        q * (t as f64).sqrt()
    }

    #[test]
    fn identical_rows_give_zero_distances() {
        let loadings = DMatrix::from_element(4, 3, 1.7);
        let d = loading_distances(&loadings);
        assert!(d.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distance_hand_example() {
        let loadings = dmatrix![1.0, 0.0; 0.0, 1.0];
        let d = loading_distances(&loadings);
        assert_eq!(d.matrix()[(0, 1)], 1.0);
    }

    #[test]
    fn ahc_hand_trace() {
        let d = DistanceMatrix::new(dmatrix![
            0.0, 1.0, 5.0;
            1.0, 0.0, 4.0;
            5.0, 4.0, 0.0
        ])
        .unwrap();
        let path = ahc_complete_linkage(&d);
        let at2 = path.partition(2);
        assert_eq!(at2.assignment(), &[1, 1, 2]);
        let log = path.merge_log();
        assert_eq!(log[0].groups, (0, 1));
        assert_eq!(log[0].distance, 1.0);
        // updated linkage to {3} is max(5,4) = 5
        assert_eq!(log[1].groups, (0, 2));
        assert_eq!(log[1].distance, 5.0);
    }

    #[test]
    fn ahc_all_equal_distances_merges_lowest_pairs() {
        let mut d = DMatrix::from_element(4, 4, 1.0);
        d.fill_diagonal(0.0);
        let path = ahc_complete_linkage(&DistanceMatrix::new(d).unwrap());
        let log = path.merge_log();
        assert_eq!(log[0].groups, (0, 1));
        assert_eq!(log[1].groups, (0, 2));
        assert_eq!(log[2].groups, (0, 3));
    }

    #[test]
    fn ahc_block_diagonal_recovers_blocks() {
        let mut d = DMatrix::from_element(6, 6, 1.0);
        for i in 0..3 {
            for j in 0..3 {
                d[(i, j)] = 0.0;
                d[(i + 3, j + 3)] = 0.0;
            }
        }
        let path = ahc_complete_linkage(&DistanceMatrix::new(d).unwrap());
        let at2 = path.partition(2);
        assert_eq!(at2.assignment(), &[1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn ahc_path_is_nested() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let loadings = DMatrix::from_fn(12, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let path = ahc_complete_linkage(&loading_distances(&loadings));
        for k in 2..=12 {
            let fine = path.partition(k);
            let coarse = path.partition(k - 1);
            // every coarse group is a union of fine groups; exactly two fine
            // groups share a coarse id
            let mut fine_to_coarse = vec![None; k + 1];
            for i in 0..12 {
                let f = fine.assignment()[i];
                let c = coarse.assignment()[i];
                match fine_to_coarse[f] {
                    None => fine_to_coarse[f] = Some(c),
                    Some(prev) => assert_eq!(prev, c, "fine group split at K={k}"),
                }
            }
            let mut counts = vec![0usize; k];
            for f in 1..=k {
                counts[fine_to_coarse[f].unwrap() - 1] += 1;
            }
            assert_eq!(counts.iter().filter(|&&c| c == 2).count(), 1);
            assert_eq!(counts.iter().filter(|&&c| c == 1).count(), k - 2);
        }
    }

    #[test]
    fn goodness_of_fit_zero_on_exact_group_model() {
        let scores = orthonormal_scores(10, 2);
        let mut b = DMatrix::zeros(6, 2);
        for i in 0..3 {
            b[(i, 0)] = 2.0;
        }
        for i in 3..6 {
            b[(i, 1)] = -1.0;
        }
        let panel = Panel::from_values(&scores * b.transpose()).unwrap();
        let truth = Partition::from_assignment(&[1, 1, 1, 2, 2, 2]).unwrap();
        let s = goodness_of_fit(&panel, &scores, &truth).unwrap();
        assert!(s < 1e-20);
    }

    #[test]
    fn goodness_of_fit_singletons_equal_unrestricted_residual() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let x = DMatrix::from_fn(9, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let panel = Panel::from_values(x.clone()).unwrap();
        let scores = orthonormal_scores(9, 2);
        let singles = Partition::from_assignment(&[1, 2, 3, 4]).unwrap();
        let s = goodness_of_fit(&panel, &scores, &singles).unwrap();
        let ols = x.transpose() * &scores / 9.0;
        let expected = (&x - &scores * ols.transpose()).norm_squared() / 36.0;
        assert!((s - expected).abs() < 1e-14);
    }

    #[test]
    fn goodness_of_fit_matches_double_loop() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let x = DMatrix::from_fn(7, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let panel = Panel::from_values(x.clone()).unwrap();
        let scores = orthonormal_scores(7, 2);
        let one = Partition::from_assignment(&[1, 1, 1, 1]).unwrap();
        let s = goodness_of_fit(&panel, &scores, &one).unwrap();
        let loadings = postgroup_loadings_mat(&x, &scores, &one);
        let mut acc = 0.0;
        for i in 0..4 {
            for t in 0..7 {
                let mut fitted = 0.0;
                for l in 0..2 {
                    fitted += loadings[(i, l)] * scores[(t, l)];
                }
                acc += (x[(t, i)] - fitted).powi(2);
            }
        }
        assert!((s - acc / 28.0).abs() < 1e-14);
    }

    #[test]
    fn rho_examples() {
        let rho = rho_default(100, 250).unwrap();
        assert!((rho - 100f64.ln() / 100.0).abs() < 1e-12);
        assert!((rho - 0.046052).abs() < 1e-6);
        // symmetry in min
        assert_eq!(rho_default(250, 100).unwrap(), rho_default(100, 250).unwrap());
        // ρ ∈ (0,1) across the integer domain (max is at m = 3, below 1/e)
        for m in 2..200 {
            let v = rho_default(m, 10_000).unwrap();
            assert!(v > 0.0 && v < 1.0);
            assert!(v <= std::f64::consts::E.recip() + 1e-12);
        }
        assert!(matches!(
            rho_default(1, 250),
            Err(Error::DegenerateGroup { m: 1 })
        ));
    }

    fn grouped_panel_with_jitter(t: usize, per_group: usize, jitter: f64) -> (Panel, DMatrix<f64>) {
        let scores = orthonormal_scores(t, 2);
        let n = per_group * 3;
        let mut b = DMatrix::zeros(n, 2);
        for i in 0..per_group {
            b[(i, 0)] = 2.0;
            b[(per_group + i, 1)] = 2.0;
            b[(2 * per_group + i, 0)] = 2.4;
            b[(2 * per_group + i, 1)] = 3.2;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let noise = DMatrix::from_fn(t, n, |_, _| rng.sample::<f64, _>(StandardNormal)) * jitter;
        let x = &scores * b.transpose() + noise;
        (Panel::from_values(x).unwrap(), scores)
    }

    #[test]
    fn noiseless_three_groups_select_three() {
        let (panel, _) = grouped_panel_with_jitter(30, 5, 1e-6);
        let fit = crate::estimators::pca_fit(&panel, 2).unwrap();
        let d = loading_distances(fit.loadings());
        let path = ahc_complete_linkage(&d);
        let report = select_group_count(&panel, fit.scores(), &path, 10).unwrap();
        assert_eq!(report.k_hat, 3);
    }

    #[test]
    fn single_group_panel_selects_one() {
        let t = 40;
        let scores = orthonormal_scores(t, 2);
        let b = DMatrix::from_fn(8, 2, |_, l| if l == 0 { 1.5 } else { -0.5 });
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let noise = DMatrix::from_fn(t, 8, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.4;
        let panel = Panel::from_values(&scores * b.transpose() + noise).unwrap();
        let fit = crate::estimators::pca_fit(&panel, 2).unwrap();
        let path = ahc_complete_linkage(&loading_distances(fit.loadings()));
        let report = select_group_count(&panel, fit.scores(), &path, 6).unwrap();
        assert_eq!(report.k_hat, 1);
    }

    #[test]
    fn k_bar_one_returns_one() {
        let (panel, _) = grouped_panel_with_jitter(20, 4, 0.01);
        let fit = crate::estimators::pca_fit(&panel, 2).unwrap();
        let path = ahc_complete_linkage(&loading_distances(fit.loadings()));
        let report = select_group_count(&panel, fit.scores(), &path, 1).unwrap();
        assert_eq!(report.k_hat, 1);
    }

    #[test]
    fn s_nonincreasing_along_path() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let x = DMatrix::from_fn(15, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let panel = Panel::from_values(x).unwrap();
        let fit = crate::estimators::pca_fit(&panel, 2).unwrap();
        let path = ahc_complete_linkage(&loading_distances(fit.loadings()));
        let mut prev = f64::INFINITY;
        for k in 1..=8 {
            let s = goodness_of_fit(&panel, fit.scores(), path.partition(k)).unwrap();
            assert!(s <= prev * (1.0 + 1e-10) + 1e-18, "S({k}) increased");
            prev = s;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn distances_satisfy_triangle_inequality(
            rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 4..8)
        ) {
            let n = rows.len();
            let loadings = DMatrix::from_fn(n, 3, |i, j| rows[i][j]);
            let d = loading_distances(&loadings);
            let m = d.matrix();
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        prop_assert!(m[(i, j)] <= m[(i, k)] + m[(k, j)] + 1e-12);
                    }
                }
            }
        }

        #[test]
        fn ahc_invariant_to_series_relabeling(seed in 0u64..500) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let n = 9;
            let loadings = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = loading_distances(&loadings);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let permuted = DMatrix::from_fn(n, 2, |i, j| loadings[(perm[i], j)]);
            let dp = loading_distances(&permuted);
            let path = ahc_complete_linkage(&d);
            let path_p = ahc_complete_linkage(&dp);
            for k in [2usize, 3, 4] {
                let a = path.partition(k);
                let b = path_p.partition(k);
                // same groups up to relabeling: co-membership must agree
                for i in 0..n {
                    for j in 0..n {
                        let together_a = a.assignment()[perm[i]] == a.assignment()[perm[j]];
                        let together_b = b.assignment()[i] == b.assignment()[j];
                        prop_assert_eq!(together_a, together_b);
                    }
                }
            }
        }
    }
}
