//! Monte-Carlo lab: data-generating processes for the two grouped-loading
//! scenarios, evaluation metrics, and the seeded replication driver.
//!
//! Replications run in parallel over independent ChaCha streams seeded
//! from `config.seed + rep`, and results are reduced in fixed rep order,
//! so a run is bit-identical for any thread count.

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{common_components, pca_fit};
use crate::pipeline::{fit_pipeline, PipelineOptions};
use crate::types::{CommonComponents, Panel, Partition};

/// Simulated design. Both scenarios use two AR(1) factors; they differ in
/// the group loadings and the idiosyncratic variance profile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    S1,
    S2,
}

impl Scenario {
    pub fn group_count(&self) -> usize {
        match self {
            Scenario::S1 => 3,
            Scenario::S2 => 4,
        }
    }

    /// Per-group loading vectors on the two factors.
    pub fn group_loadings(&self) -> &'static [[f64; 2]] {
        match self {
            Scenario::S1 => &[[2.0, 0.0], [0.0, 2.0], [2.4, 3.2]],
            Scenario::S2 => &[[2.0, 0.0], [0.0, 2.0], [1.0, 3.0], [3.0, 1.0]],
        }
    }

    /// Idiosyncratic variance θ for a loading row: 4‖b‖²/3 in S1, ‖b‖² in S2.
    pub fn theta(&self, b: &[f64; 2]) -> f64 {
        let norm_sq = b[0] * b[0] + b[1] * b[1];
        match self {
            Scenario::S1 => 4.0 * norm_sq / 3.0,
            Scenario::S2 => norm_sq,
        }
    }

    fn expected_thetas(&self) -> &'static [f64] {
        match self {
            Scenario::S1 => &[16.0 / 3.0, 16.0 / 3.0, 64.0 / 3.0],
            Scenario::S2 => &[4.0, 4.0, 10.0, 10.0],
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::S1 => write!(f, "S1"),
            Scenario::S2 => write!(f, "S2"),
        }
    }
}

/// DGP parameters for one Monte-Carlo cell.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub t: usize,
    pub n: usize,
    pub kappa: f64,
    pub ar_coeff: f64,
    pub band_value: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Builds a config with the default AR coefficient 0.2 and banded
    /// off-diagonal 0.02. N must split evenly across the scenario's groups.
    pub fn new(scenario: Scenario, t: usize, n: usize, kappa: f64, seed: u64) -> Result<Self> {
        let groups = scenario.group_count();
        if n % groups != 0 {
            return Err(Error::IndivisibleGroups { n, groups });
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if t < 2 || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "scenario needs T >= 2 and N >= 2, got ({t}, {n})"
            )));
        }
        Ok(Self {
            scenario,
            t,
            n,
            kappa,
            ar_coeff: 0.2,
            band_value: 0.02,
            seed,
        })
    }
}

/// One simulated draw together with its ground truth.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub panel: Panel,
    pub true_scores: DMatrix<f64>,
    pub true_loadings: DMatrix<f64>,
    pub truth: Partition,
}

/// Independent AR(1) columns f_t = φ·f_{t−1} + v_t with standard normal
/// innovations, initialized from the stationary law (variance 1/(1−φ²)).
/// Columns are drawn one after another; no rescaling is applied.
pub fn gen_ar1_factors(t: usize, r: usize, phi: f64, rng: &mut ChaCha12Rng) -> DMatrix<f64> {
    assert!(phi.abs() < 1.0, "AR(1) coefficient must satisfy |phi| < 1");
    let stationary_sd = 1.0 / (1.0 - phi * phi).sqrt();
    let mut f = DMatrix::zeros(t, r);
    for m in 0..r {
        let mut prev: f64 = rng.sample::<f64, _>(StandardNormal) * stationary_sd;
        f[(0, m)] = prev;
        for i in 1..t {
            prev = phi * prev + rng.sample::<f64, _>(StandardNormal);
            f[(i, m)] = prev;
        }
    }
    f
}

/// Banded matrix with unit diagonal and `band_value` on the first
/// off-diagonals.
pub fn gen_banded(n: usize, band_value: f64) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        p[(i, i)] = 1.0;
        if i + 1 < n {
            p[(i, i + 1)] = band_value;
            p[(i + 1, i)] = band_value;
        }
    }
    p
}

/// Draws one panel: X = F·Bᵀ + (P₁·S·P₂)·diag(√θ) with S entries i.i.d.
/// N(0, κ), groups in series order with equal sizes.
pub fn simulate(config: &ScenarioConfig) -> Result<SimDraw> {
    let groups = config.scenario.group_count();
    if config.n % groups != 0 {
        return Err(Error::IndivisibleGroups {
            n: config.n,
            groups,
        });
    }
    let per_group = config.n / groups;
    let group_loadings = config.scenario.group_loadings();

    let mut loadings = DMatrix::zeros(config.n, 2);
    let mut thetas = Vec::with_capacity(config.n);
    let mut assignment = Vec::with_capacity(config.n);
    for (g, b) in group_loadings.iter().enumerate() {
        let theta = config.scenario.theta(b);
        debug_assert!((theta - config.scenario.expected_thetas()[g]).abs() < 1e-12);
        for i in 0..per_group {
            let row = g * per_group + i;
            loadings[(row, 0)] = b[0];
            loadings[(row, 1)] = b[1];
            thetas.push(theta);
            assignment.push(g + 1);
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let scores = gen_ar1_factors(config.t, 2, config.ar_coeff, &mut rng);

    let noise_sd = config.kappa.sqrt();
    let mut shocks = DMatrix::zeros(config.t, config.n);
    for i in 0..config.t {
        for j in 0..config.n {
            shocks[(i, j)] = rng.sample::<f64, _>(StandardNormal) * noise_sd;
        }
    }
    let p1 = gen_banded(config.t, config.band_value);
    let p2 = gen_banded(config.n, config.band_value);
    let mut errors = p1 * shocks * p2;
    for (j, theta) in thetas.iter().enumerate() {
        let scale = theta.sqrt();
        for i in 0..config.t {
            errors[(i, j)] *= scale;
        }
    }

    let values = &scores * loadings.transpose() + errors;
    let panel = Panel::from_values(values)?;
    let truth = Partition::from_assignment(&assignment)?;
    Ok(SimDraw {
        panel,
        true_scores: scores,
        true_loadings: loadings,
        truth,
    })
}

/// (NT)⁻¹ squared Frobenius distance between estimated and true common
/// components.
pub fn mse_common(estimated: &CommonComponents, truth: &DMatrix<f64>) -> Result<f64> {
    if estimated.nrows() != truth.nrows() || estimated.ncols() != truth.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "common components are {}×{} but truth is {}×{}",
            estimated.nrows(),
            estimated.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    let diff = estimated.matrix() - truth;
    Ok(diff.norm_squared() / (truth.nrows() * truth.ncols()) as f64)
}

/// Rotation-invariant distance between loading column spaces:
/// √(1 − tr(Q̃Q̃ᵀQQᵀ)/r) over the left singular bases, clamped to [0,1].
pub fn subspace_distance(b_est: &DMatrix<f64>, b_true: &DMatrix<f64>) -> Result<f64> {
    if b_est.nrows() != b_true.nrows() || b_est.ncols() != b_true.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "loading matrices are {}×{} and {}×{}",
            b_est.nrows(),
            b_est.ncols(),
            b_true.nrows(),
            b_true.ncols()
        )));
    }
    let r = b_est.ncols();
    let q_est = left_singular_basis(b_est, r)?;
    let q_true = left_singular_basis(b_true, r)?;
    let overlap = (q_est.transpose() * q_true).norm_squared();
    Ok((1.0 - overlap / r as f64).clamp(0.0, 1.0).sqrt())
}

fn left_singular_basis(b: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let svd = b.clone().svd(true, false);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * b.nrows().max(b.ncols()) as f64 * f64::EPSILON;
    let positive = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if positive < r {
        return Err(Error::RankDeficient {
            requested: r,
            positive,
            eigenvalues: svd.singular_values.iter().copied().collect(),
        });
    }
    let u = svd.u.expect("left singular vectors were requested");
    // keep the r columns with the largest singular values
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let mut q = DMatrix::zeros(u.nrows(), r);
    for (j, &i) in order.iter().take(r).enumerate() {
        q.set_column(j, &u.column(i));
    }
    Ok(q)
}

/// Pair-counting agreement indexes between an estimated and a true
/// partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringIndexes {
    pub rand: f64,
    pub arand: f64,
    pub jaccard: f64,
    pub purity: f64,
}

/// Rand, adjusted Rand (Hubert–Arabie), Jaccard and Purity. Degenerate
/// 0/0 ratios (both partitions trivially identical) evaluate to 1.
pub fn clustering_indexes(est: &Partition, truth: &Partition) -> Result<ClusteringIndexes> {
    if est.n() != truth.n() {
        return Err(Error::LengthMismatch {
            left: est.n(),
            right: truth.n(),
        });
    }
    let n = est.n();
    let (ke, kt) = (est.k(), truth.k());
    let mut counts = vec![0u64; ke * kt];
    for i in 0..n {
        let e = est.assignment()[i] - 1;
        let t = truth.assignment()[i] - 1;
        counts[e * kt + t] += 1;
    }
    let choose2 = |v: u64| v * v.saturating_sub(1) / 2;

    let mut a = 0u64; // together in both
    let mut purity_sum = 0u64;
    for e in 0..ke {
        let mut best = 0u64;
        for t in 0..kt {
            let c = counts[e * kt + t];
            a += choose2(c);
            best = best.max(c);
        }
        purity_sum += best;
    }
    let together_est: u64 = (0..ke)
        .map(|e| choose2((0..kt).map(|t| counts[e * kt + t]).sum()))
        .sum();
    let together_truth: u64 = (0..kt)
        .map(|t| choose2((0..ke).map(|e| counts[e * kt + t]).sum()))
        .sum();
    let total = choose2(n as u64);
    let b = together_est - a;
    let c = together_truth - a;
    let d = total - a - b - c;
    Ok(indexes_from_pair_counts(a, b, c, d, purity_sum, n))
}

/// Shared final arithmetic so the pair counts map to identical floats no
/// matter how they were tallied.
pub(crate) fn indexes_from_pair_counts(
    a: u64,
    b: u64,
    c: u64,
    d: u64,
    purity_sum: u64,
    n: usize,
) -> ClusteringIndexes {
    let total = a + b + c + d;
    let rand = if total == 0 {
        1.0
    } else {
        (a + d) as f64 / total as f64
    };
    let jaccard = if a + b + c == 0 {
        1.0
    } else {
        a as f64 / (a + b + c) as f64
    };
    let num = 2.0 * (a as i128 * d as i128 - b as i128 * c as i128) as f64;
    let den = ((a + b) as i128 * (b + d) as i128 + (a + c) as i128 * (c + d) as i128) as f64;
    let arand = if den == 0.0 { 1.0 } else { num / den };
    let purity = purity_sum as f64 / n as f64;
    ClusteringIndexes {
        rand,
        arand,
        jaccard,
        purity,
    }
}

/// Aggregated Monte-Carlo results for one configuration cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RepSummary {
    pub mse_ppca: f64,
    pub mse_pca: f64,
    pub k_hat_mean: f64,
    pub freq_under: usize,
    pub freq_over: usize,
    pub rand: f64,
    pub arand: f64,
    pub jaccard: f64,
    pub purity: f64,
    pub subspace_dist: f64,
    pub n_reps: usize,
    pub n_failures: usize,
}

/// Header of the CSV emitted for replication summaries; column names
/// follow the simulation tables (MSE, K̂ mean, Freq under/over, Rand,
/// aRand, Jaccard, Purity, loading-space distance).
pub const SUMMARY_CSV_HEADER: &str = "scenario,T,N,kappa,reps,failures,MSE_PPCA,MSE_PCA,\
K_hat_mean,Freq_under,Freq_over,Rand,aRand,Jaccard,Purity,D_loading";

/// One CSV row matching [`SUMMARY_CSV_HEADER`].
pub fn summary_csv_row(config: &ScenarioConfig, summary: &RepSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        config.scenario,
        config.t,
        config.n,
        config.kappa,
        summary.n_reps,
        summary.n_failures,
        summary.mse_ppca,
        summary.mse_pca,
        summary.k_hat_mean,
        summary.freq_under,
        summary.freq_over,
        summary.rand,
        summary.arand,
        summary.jaccard,
        summary.purity,
        summary.subspace_dist
    )
}

struct RepMetrics {
    mse_ppca: f64,
    mse_pca: f64,
    k_hat: usize,
    indexes: ClusteringIndexes,
    subspace: f64,
}

fn run_one(config: &ScenarioConfig, options: &PipelineOptions) -> Result<RepMetrics> {
    let draw = simulate(config)?;
    let fitted = fit_pipeline(&draw.panel, options)?;
    let pca = pca_fit(&draw.panel, fitted.r)?;
    let truth_common = &draw.true_scores * draw.true_loadings.transpose();
    let mse_ppca = mse_common(&common_components(&fitted.fit), &truth_common)?;
    let mse_pca = mse_common(&common_components(&pca), &truth_common)?;
    let indexes = clustering_indexes(&fitted.partition, &draw.truth)?;
    let subspace = subspace_distance(fitted.postgroup.loadings(), &draw.true_loadings)?;
    Ok(RepMetrics {
        mse_ppca,
        mse_pca,
        k_hat: fitted.selection.k_hat,
        indexes,
        subspace,
    })
}

/// Runs `n_reps` seeded replications of the full pipeline and aggregates
/// the per-replication metrics. Failed replications are counted, not
/// fatal; means are over the successful ones. K̂ under/over frequencies
/// are against the scenario's true group count.
pub fn run_replications(
    config: &ScenarioConfig,
    n_reps: usize,
    options: &PipelineOptions,
) -> RepSummary {
    let results: Vec<Option<RepMetrics>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rep_config = config.clone();
            rep_config.seed = config.seed.wrapping_add(rep as u64);
            match run_one(&rep_config, options) {
                Ok(metrics) => Some(metrics),
                Err(err) => {
                    log::warn!("replication {rep} failed: {err}");
                    None
                }
            }
        })
        .collect();

    let k0 = config.scenario.group_count();
    let mut summary = RepSummary {
        mse_ppca: 0.0,
        mse_pca: 0.0,
        k_hat_mean: 0.0,
        freq_under: 0,
        freq_over: 0,
        rand: 0.0,
        arand: 0.0,
        jaccard: 0.0,
        purity: 0.0,
        subspace_dist: 0.0,
        n_reps,
        n_failures: 0,
    };
    let mut successes = 0usize;
    for result in results {
        match result {
            None => summary.n_failures += 1,
            Some(m) => {
                successes += 1;
                summary.mse_ppca += m.mse_ppca;
                summary.mse_pca += m.mse_pca;
                summary.k_hat_mean += m.k_hat as f64;
                if m.k_hat < k0 {
                    summary.freq_under += 1;
                }
                if m.k_hat > k0 {
                    summary.freq_over += 1;
                }
                summary.rand += m.indexes.rand;
                summary.arand += m.indexes.arand;
                summary.jaccard += m.indexes.jaccard;
                summary.purity += m.indexes.purity;
                summary.subspace_dist += m.subspace;
            }
        }
    }
    if successes > 0 {
        let denom = successes as f64;
        summary.mse_ppca /= denom;
        summary.mse_pca /= denom;
        summary.k_hat_mean /= denom;
        summary.rand /= denom;
        summary.arand /= denom;
        summary.jaccard /= denom;
        summary.purity /= denom;
        summary.subspace_dist /= denom;
    } else {
        summary.mse_ppca = f64::NAN;
        summary.mse_pca = f64::NAN;
        summary.k_hat_mean = f64::NAN;
        summary.rand = f64::NAN;
        summary.arand = f64::NAN;
        summary.jaccard = f64::NAN;
        summary.purity = f64::NAN;
        summary.subspace_dist = f64::NAN;
    }
    summary
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn banded_matrix_examples() {
        let p = gen_banded(3, 0.02);
        let expected = dmatrix![
            1.0, 0.02, 0.0;
            0.02, 1.0, 0.02;
            0.0, 0.02, 1.0
        ];
        assert_eq!(p, expected);
        assert_eq!(gen_banded(1, 0.02), dmatrix![1.0]);
        let p5 = gen_banded(5, 0.3);
        assert_eq!(p5, p5.transpose());
    }

    #[test]
    fn ar1_phi_zero_is_iid_normal() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let f = gen_ar1_factors(50_000, 1, 0.0, &mut rng);
        let mean = f.column(0).mean();
        let var = f.column(0).map(|v| v * v).mean() - mean * mean;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn ar1_stationary_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let t = 100_000;
        let f = gen_ar1_factors(t, 1, 0.2, &mut rng);
        let col = f.column(0);
        let mean = col.mean();
        let var = col.map(|v| v * v).mean() - mean * mean;
        assert!((var - 1.0 / (1.0 - 0.04)).abs() < 0.02);
        let mut lag_cov = 0.0;
        for i in 1..t {
            lag_cov += (col[i] - mean) * (col[i - 1] - mean);
        }
        lag_cov /= (t - 1) as f64;
        let autocorr = lag_cov / var;
        assert!((autocorr - 0.2).abs() < 0.05);
    }

    #[test]
    fn scenario_thetas_match_dgp_constants() {
        let s1: Vec<f64> = Scenario::S1
            .group_loadings()
            .iter()
            .map(|b| Scenario::S1.theta(b))
            .collect();
        assert_eq!(s1, vec![16.0 / 3.0, 16.0 / 3.0, 64.0 / 3.0]);
        let s2: Vec<f64> = Scenario::S2
            .group_loadings()
            .iter()
            .map(|b| Scenario::S2.theta(b))
            .collect();
        assert_eq!(s2, vec![4.0, 4.0, 10.0, 10.0]);
    }

    #[test]
    fn simulate_rejects_indivisible_n() {
        assert!(matches!(
            ScenarioConfig::new(Scenario::S1, 50, 40, 0.5, 1),
            Err(Error::IndivisibleGroups { n: 40, groups: 3 })
        ));
    }

    #[test]
    fn near_noiseless_panel_is_recovered_by_pca() {
        let config = ScenarioConfig::new(Scenario::S1, 40, 30, 1e-12, 3).unwrap();
        let draw = simulate(&config).unwrap();
        let fit = pca_fit(&draw.panel, 2).unwrap();
        let truth = &draw.true_scores * draw.true_loadings.transpose();
        let mse = mse_common(&common_components(&fit), &truth).unwrap();
        assert!(mse <= 1e-8);
    }

    #[test]
    fn simulate_is_seed_deterministic() {
        let config = ScenarioConfig::new(Scenario::S2, 30, 16, 0.8, 77).unwrap();
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a.panel.values(), b.panel.values());
        assert_eq!(a.truth, b.truth);
    }

    #[test]
    fn mse_common_examples() {
        let truth = DMatrix::zeros(2, 2);
        let est = CommonComponents::from_matrix(DMatrix::from_element(2, 2, 1.0));
        assert_eq!(mse_common(&est, &truth).unwrap(), 1.0);
        let same = CommonComponents::from_matrix(truth.clone());
        assert_eq!(mse_common(&same, &truth).unwrap(), 0.0);
    }

    #[test]
    fn mse_invariant_under_joint_rotation() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let f = DMatrix::from_fn(10, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(6, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let truth = DMatrix::from_fn(10, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let angle = 0.7f64;
        let rot = dmatrix![angle.cos(), -angle.sin(); angle.sin(), angle.cos()];
        let c1 = CommonComponents::from_matrix(&f * b.transpose());
        let c2 = CommonComponents::from_matrix(&f * &rot * (&b * &rot).transpose());
        let m1 = mse_common(&c1, &truth).unwrap();
        let m2 = mse_common(&c2, &truth).unwrap();
        assert!((m1 - m2).abs() < 1e-12);
    }

    #[test]
    fn subspace_distance_examples() {
        // same column space up to an invertible transform
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let b = DMatrix::from_fn(7, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = dmatrix![1.0, 0.4; -0.3, 2.0];
        assert!(subspace_distance(&(&b * r), &b).unwrap() < 1e-10);

        // orthogonal spaces
        let e1 = dmatrix![1.0; 0.0];
        let e2 = dmatrix![0.0; 1.0];
        assert!((subspace_distance(&e1, &e2).unwrap() - 1.0).abs() < 1e-12);

        // 45 degrees: √(1 − cos²45°) = √0.5
        let diag = dmatrix![1.0; 1.0];
        let d = subspace_distance(&diag, &e1).unwrap();
        assert!((d - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn subspace_distance_symmetric_and_rank_checked() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let a = DMatrix::from_fn(8, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(8, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let d1 = subspace_distance(&a, &b).unwrap();
        let d2 = subspace_distance(&b, &a).unwrap();
        assert!((d1 - d2).abs() < 1e-12);

        let col = a.column(0).into_owned();
        let rank1 = DMatrix::from_columns(&[col.clone(), col * 3.0]);
        assert!(matches!(
            subspace_distance(&rank1, &b),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn clustering_examples() {
        let truth = Partition::from_assignment(&[1, 1, 2, 2]).unwrap();
        let same = clustering_indexes(&truth, &truth).unwrap();
        assert_eq!(
            (same.rand, same.arand, same.jaccard, same.purity),
            (1.0, 1.0, 1.0, 1.0)
        );

        let est = Partition::from_assignment(&[1, 2, 1, 2]).unwrap();
        let idx = clustering_indexes(&est, &truth).unwrap();
        assert!((idx.rand - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(idx.purity, 0.5);

        let singles = Partition::from_assignment(&[1, 2, 3, 4]).unwrap();
        let one = Partition::from_assignment(&[1, 1, 1, 1]).unwrap();
        let idx = clustering_indexes(&singles, &one).unwrap();
        assert_eq!(idx.purity, 1.0);
        assert_eq!(idx.jaccard, 0.0);
    }

    /// O(N²) enumeration over all pairs, independent of the contingency
    /// table path used by the implementation.
    fn brute_force_indexes(est: &Partition, truth: &Partition) -> ClusteringIndexes {
        let n = est.n();
        let (mut a, mut b, mut c, mut d) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..n {
            for j in (i + 1)..n {
                let te = est.assignment()[i] == est.assignment()[j];
                let tt = truth.assignment()[i] == truth.assignment()[j];
                match (te, tt) {
                    (true, true) => a += 1,
                    (true, false) => b += 1,
                    (false, true) => c += 1,
                    (false, false) => d += 1,
                }
            }
        }
        let mut purity_sum = 0u64;
        for members in est.groups() {
            let mut overlap = vec![0u64; truth.k()];
            for &i in &members {
                overlap[truth.assignment()[i] - 1] += 1;
            }
            purity_sum += overlap.into_iter().max().unwrap_or(0);
        }
        indexes_from_pair_counts(a, b, c, d, purity_sum, n)
    }

    #[test]
    fn clustering_matches_brute_force_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(2..=12);
            let est_raw: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
            let truth_raw: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
            let est = Partition::from_assignment(&est_raw).unwrap();
            let truth = Partition::from_assignment(&truth_raw).unwrap();
            let fast = clustering_indexes(&est, &truth).unwrap();
            let slow = brute_force_indexes(&est, &truth);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn noiseless_replication_recovers_everything() {
        let config = ScenarioConfig::new(Scenario::S1, 45, 18, 1e-12, 11).unwrap();
        let options = PipelineOptions {
            folds: 5,
            ..PipelineOptions::default()
        };
        let summary = run_replications(&config, 1, &options);
        assert_eq!(summary.n_failures, 0);
        assert_eq!(summary.k_hat_mean, 3.0);
        assert_eq!(summary.rand, 1.0);
        assert_eq!(summary.arand, 1.0);
        assert_eq!(summary.jaccard, 1.0);
        assert_eq!(summary.purity, 1.0);
        // the post-grouping estimator is unbiased in the noiseless limit
        assert!(summary.subspace_dist < 1e-5);
    }

    #[test]
    fn replications_are_thread_count_invariant() {
        let config = ScenarioConfig::new(Scenario::S1, 40, 24, 0.1, 21).unwrap();
        let options = PipelineOptions {
            r: Some(2),
            folds: 5,
            lambda_grid: Some(vec![0.0, 1.0, 12.0]),
            ..PipelineOptions::default()
        };
        let base = run_replications(&config, 4, &options);
        assert_eq!(base.n_failures, 0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let other = pool.install(|| run_replications(&config, 4, &options));
        assert_eq!(base, other);
    }
}
