//! The residual prediction test.
//!
//! On the main sample the statistic is
//!
//! ```text
//! N(w)  = n₀^{-1/2} Σ w(Z_i) R̂_i
//! Âwᵀ  = -Ê[w(Z) Xᵀ] M̂
//! T     = N(ŵ) / max(σ̂_ŵ, √γ),    p = 1 - Φ(T)
//! ```
//!
//! where `σ̂²` is one of the heteroskedasticity-robust, homoskedastic or
//! cluster-robust variance estimators below. Because `M̂ Ê[Z R̂] = 0`,
//! `Σ (w_i + ÂwᵀZ_i) R̂_i = Σ w_i R̂_i` on every fit, so all three estimators
//! are centred versions of the same influence terms `(w_i + ÂwᵀZ_i) R̂_i`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::AugmentedDataset;
use crate::error::{Result, RpivError};
use crate::iv::fit_tsls;
use crate::normal;
use crate::rng::derive_seed;
use crate::weight::{learn_weight, RandomForestRegressor, Regressor, DEFAULT_CLIP_QUANTILE};

/// Default `γ / mean(R̂²)`.
pub const DEFAULT_GAMMA_FRAC: f64 = 0.05;
/// Default number of random splits for aggregated p-values.
pub const DEFAULT_SPLITS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarianceKind {
    #[serde(rename = "het")]
    Heteroskedastic,
    #[serde(rename = "hom")]
    Homoskedastic,
    #[serde(rename = "cluster")]
    ClusterRobust,
}

impl VarianceKind {
    pub const ALL: [VarianceKind; 3] = [
        VarianceKind::Heteroskedastic,
        VarianceKind::Homoskedastic,
        VarianceKind::ClusterRobust,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VarianceKind::Heteroskedastic => "het",
            VarianceKind::Homoskedastic => "hom",
            VarianceKind::ClusterRobust => "cluster",
        }
    }
}

impl fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarianceKind {
    type Err = RpivError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "het" | "heteroskedastic" => Ok(VarianceKind::Heteroskedastic),
            "hom" | "homoskedastic" => Ok(VarianceKind::Homoskedastic),
            "cluster" | "cluster-robust" => Ok(VarianceKind::ClusterRobust),
            other => Err(RpivError::InvalidConfig(format!("unknown variance kind {other:?}"))),
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(RpivError::DimensionMismatch(format!(
            "{what} has length {got}, expected {want}"
        )));
    }
    Ok(())
}

/// `N(w) = n₀^{-1/2} Σ w_i R̂_i`.
pub fn numerator(weights: &DVector<f64>, residuals: &DVector<f64>) -> Result<f64> {
    check_len("weights", weights.len(), residuals.len())?;
    if residuals.is_empty() {
        return Err(RpivError::TooFewObservations("empty main sample".into()));
    }
    Ok(weights.dot(residuals) / (residuals.len() as f64).sqrt())
}

/// `Âw = -(Ê[w Xᵀ] M̂)ᵀ`, length d'.
pub fn correction_vector(
    weights: &DVector<f64>,
    x: &DMatrix<f64>,
    m_hat: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_len("weights", weights.len(), x.nrows())?;
    if m_hat.nrows() != x.ncols() {
        return Err(RpivError::DimensionMismatch(format!(
            "M̂ has {} rows for {} regressors",
            m_hat.nrows(),
            x.ncols()
        )));
    }
    let wx = x.tr_mul(weights) / x.nrows() as f64;
    Ok(-(m_hat.tr_mul(&wx)))
}

/// Influence terms `u_i = (w_i + ÂwᵀZ_i) R̂_i`, together with `w_i + ÂwᵀZ_i`.
fn influence(
    weights: &DVector<f64>,
    z: &DMatrix<f64>,
    residuals: &DVector<f64>,
    a_hat: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = residuals.len();
    check_len("weights", weights.len(), n)?;
    check_len("instrument rows", z.nrows(), n)?;
    check_len("correction vector", a_hat.len(), z.ncols())?;
    if n == 0 {
        return Err(RpivError::TooFewObservations("empty main sample".into()));
    }
    let factor = weights + z * a_hat;
    let u = factor.component_mul(residuals);
    Ok((factor, u))
}

/// Heteroskedasticity-robust `σ̂²_w`:
/// `(1/n₀) Σ (w_i + ÂwᵀZ_i)² R̂_i² - ((1/n₀) Σ w_i R̂_i)²`, clamped at 0.
pub fn sigma_het(
    weights: &DVector<f64>,
    z: &DMatrix<f64>,
    residuals: &DVector<f64>,
    a_hat: &DVector<f64>,
) -> Result<f64> {
    let (_, u) = influence(weights, z, residuals, a_hat)?;
    let n = u.len() as f64;
    let mean_wr = weights.dot(residuals) / n;
    Ok((u.norm_squared() / n - mean_wr * mean_wr).max(0.0))
}

/// Homoskedastic `σ̂²_w,hom`: `(1/n₀) Σ (w_i + ÂwᵀZ_i)² · (1/n₀) Σ R̂_i²`.
pub fn sigma_hom(
    weights: &DVector<f64>,
    z: &DMatrix<f64>,
    residuals: &DVector<f64>,
    a_hat: &DVector<f64>,
) -> Result<f64> {
    let (factor, _) = influence(weights, z, residuals, a_hat)?;
    let n = residuals.len() as f64;
    Ok((factor.norm_squared() / n) * (residuals.norm_squared() / n))
}

/// Cluster-robust `σ̂²_w,clu`:
/// `(1/n₀) Σ_g Ŝ_g² - (n₀/G) ((1/n₀) Σ w_i R̂_i)²` with
/// `Ŝ_g = Σ_{i∈g} (w_i + ÂwᵀZ_i) R̂_i`, clamped at 0.
pub fn sigma_cluster(
    weights: &DVector<f64>,
    z: &DMatrix<f64>,
    residuals: &DVector<f64>,
    a_hat: &DVector<f64>,
    cluster_ids: &[usize],
) -> Result<f64> {
    let (_, u) = influence(weights, z, residuals, a_hat)?;
    check_len("cluster labels", cluster_ids.len(), u.len())?;
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut totals: Vec<f64> = Vec::new();
    for (&g, &ui) in cluster_ids.iter().zip(u.iter()) {
        let k = *slot.entry(g).or_insert_with(|| {
            totals.push(0.0);
            totals.len() - 1
        });
        totals[k] += ui;
    }
    let groups = totals.len();
    if groups < 2 {
        return Err(RpivError::TooFewClusters(groups));
    }
    let n = u.len() as f64;
    let mean_wr = weights.dot(residuals) / n;
    let between: f64 = totals.iter().map(|s| s * s).sum::<f64>() / n;
    Ok((between - n / groups as f64 * mean_wr * mean_wr).max(0.0))
}

/// Settings of a single test run.
#[derive(Debug, Clone)]
pub struct TestConfig {
    pub variance_kind: VarianceKind,
    pub clip_quantile: f64,
    pub gamma_frac: f64,
    pub seed: u64,
    pub regressor: Arc<dyn Regressor>,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            variance_kind: VarianceKind::Heteroskedastic,
            clip_quantile: DEFAULT_CLIP_QUANTILE,
            gamma_frac: DEFAULT_GAMMA_FRAC,
            seed: 0,
            regressor: Arc::new(RandomForestRegressor::default()),
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_frac > 0.0 && self.gamma_frac.is_finite()) {
            return Err(RpivError::InvalidConfig(format!(
                "gamma fraction must be positive, got {}",
                self.gamma_frac
            )));
        }
        if !(self.clip_quantile > 0.0 && self.clip_quantile < 1.0) {
            return Err(RpivError::InvalidConfig(format!(
                "clip quantile must lie in (0, 1), got {}",
                self.clip_quantile
            )));
        }
        Ok(())
    }
}

/// Result of one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub numerator: f64,
    pub sigma_hat: f64,
    /// Variance floor actually used.
    pub gamma: f64,
    pub statistic: f64,
    pub p_value: f64,
    pub variance_kind: VarianceKind,
    pub n_a: usize,
    pub n_0: usize,
    pub seed: u64,
    /// `K` of the learned weight function; `None` if `ŵ ≡ 0`.
    pub clip_k: Option<f64>,
    /// Set when the main-sample residuals are all exactly zero and `γ` had
    /// to be replaced by machine epsilon.
    pub degenerate: bool,
}

/// `1 - Φ(N / max(σ̂, √γ))`.
pub fn p_value(numerator: f64, sigma_hat: f64, gamma: f64) -> (f64, f64) {
    let statistic = numerator / sigma_hat.max(gamma.sqrt());
    (statistic, normal::upper_tail(statistic))
}

/// Everything a split produces before a variance estimator is chosen.
#[derive(Debug, Clone)]
struct SplitStatistics {
    numerator: f64,
    weights: DVector<f64>,
    a_hat: DVector<f64>,
    residuals: DVector<f64>,
    main: AugmentedDataset,
    gamma: f64,
    degenerate: bool,
    n_a: usize,
    clip_k: Option<f64>,
}

impl SplitStatistics {
    fn compute(
        ds: &AugmentedDataset,
        clip_quantile: f64,
        gamma_frac: f64,
        seed: u64,
        regressor: &dyn Regressor,
    ) -> Result<Self> {
        let (plan, aux, main) = ds.split(seed)?;
        let w_fn = learn_weight(&aux, regressor, clip_quantile, seed)?;
        let fit = fit_tsls(&main.y, &main.x, &main.z)?;
        let weights = w_fn.evaluate(&main.z);
        let num = numerator(&weights, &fit.residuals)?;
        let a_hat = correction_vector(&weights, &main.x, &fit.m_hat)?;
        let mean_r2 = fit.residuals.norm_squared() / fit.residuals.len() as f64;
        let (gamma, degenerate) = if mean_r2 > 0.0 {
            (gamma_frac * mean_r2, false)
        } else {
            (f64::EPSILON, true)
        };
        Ok(SplitStatistics {
            numerator: num,
            weights,
            a_hat,
            residuals: fit.residuals,
            main,
            gamma,
            degenerate,
            n_a: plan.aux_indices.len(),
            clip_k: w_fn.clip_k(),
        })
    }

    fn sigma2(&self, kind: VarianceKind) -> Result<f64> {
        let (w, z, r, a) = (&self.weights, &self.main.z, &self.residuals, &self.a_hat);
        match kind {
            VarianceKind::Heteroskedastic => sigma_het(w, z, r, a),
            VarianceKind::Homoskedastic => sigma_hom(w, z, r, a),
            VarianceKind::ClusterRobust => {
                let ids = self
                    .main
                    .cluster_ids
                    .as_deref()
                    .ok_or(RpivError::ClusterRequired)?;
                sigma_cluster(w, z, r, a, ids)
            }
        }
    }

    fn outcome(&self, kind: VarianceKind, seed: u64) -> Result<TestOutcome> {
        let sigma_hat = self.sigma2(kind)?.sqrt();
        let (statistic, p_value) = p_value(self.numerator, sigma_hat, self.gamma);
        Ok(TestOutcome {
            numerator: self.numerator,
            sigma_hat,
            gamma: self.gamma,
            statistic,
            p_value,
            variance_kind: kind,
            n_a: self.n_a,
            n_0: self.residuals.len(),
            seed,
            clip_k: self.clip_k,
            degenerate: self.degenerate,
        })
    }
}

/// One split of the full pipeline: split, learn `ŵ` on the auxiliary part,
/// fit 2SLS on the main part and compute the floored one-sided p-value.
pub fn run_test(ds: &AugmentedDataset, cfg: &TestConfig) -> Result<TestOutcome> {
    let mut out = run_test_kinds(ds, cfg, &[cfg.variance_kind])?;
    Ok(out.remove(0))
}

/// Like [`run_test`] but evaluates several variance estimators on the same
/// split and weight function.
pub fn run_test_kinds(
    ds: &AugmentedDataset,
    cfg: &TestConfig,
    kinds: &[VarianceKind],
) -> Result<Vec<TestOutcome>> {
    cfg.validate()?;
    if kinds.contains(&VarianceKind::ClusterRobust) && ds.cluster_ids.is_none() {
        return Err(RpivError::ClusterRequired);
    }
    let stats = SplitStatistics::compute(
        ds,
        cfg.clip_quantile,
        cfg.gamma_frac,
        cfg.seed,
        cfg.regressor.as_ref(),
    )?;
    kinds.iter().map(|&k| stats.outcome(k, cfg.seed)).collect()
}

/// Per-split outcomes and the doubled-median p-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateOutcome {
    pub per_split: Vec<TestOutcome>,
    /// `min(1, 2·median(p))`.
    pub aggregated_p: f64,
}

/// Median; for an even count, the mean of the two central values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// `min(1, 2·median(p))`.
pub fn doubled_median(p_values: &[f64]) -> f64 {
    (2.0 * median(p_values)).min(1.0)
}

/// Repeats [`run_test`] over `num_splits` splits whose seeds are derived from
/// `(cfg.seed, split_index)`.
pub fn run_aggregated(
    ds: &AugmentedDataset,
    cfg: &TestConfig,
    num_splits: usize,
) -> Result<AggregateOutcome> {
    if num_splits == 0 {
        return Err(RpivError::InvalidConfig("need at least one split".into()));
    }
    let per_split = (0..num_splits)
        .into_par_iter()
        .map(|s| {
            let mut c = cfg.clone();
            c.seed = derive_seed(cfg.seed, s as u64);
            run_test(ds, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let ps: Vec<f64> = per_split.iter().map(|o| o.p_value).collect();
    Ok(AggregateOutcome {
        aggregated_p: doubled_median(&ps),
        per_split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use crate::rng::{Domain, Stream};

    fn random_instance(
        rng: &mut Stream,
        n: usize,
        p: usize,
        d: usize,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let z = DMatrix::from_fn(n, d, |_, j| if j == d - 1 { 1.0 } else { rng.normal() });
        let pi = DMatrix::from_fn(d, p, |_, _| rng.normal());
        let mut x = &z * pi + DMatrix::from_fn(n, p, |_, _| rng.normal());
        x.column_mut(p - 1).fill(1.0);
        let y = DVector::from_fn(n, |_, _| rng.normal());
        (y, x, z)
    }

    #[test]
    fn numerator_edge_cases() {
        let r = DVector::from_column_slice(&[1.0, -2.0, 3.0, 0.5]);
        assert_eq!(numerator(&DVector::zeros(4), &r).unwrap(), 0.0);
        assert!(numerator(&DVector::zeros(3), &r).is_err());
        // w·r = 1 - 2 + 3 + 0.5 = 2.5, over √4
        assert_eq!(numerator(&DVector::from_element(4, 1.0), &r).unwrap(), 1.25);
    }

    #[test]
    fn constant_and_linear_weights_give_zero_numerator() {
        let mut rng = Stream::new(Domain::Simulation, 11, 0, 0);
        for &(p, d) in &[(2usize, 2usize), (2, 4)] {
            let (y, x, z) = random_instance(&mut rng, 80, p, d);
            let fit = fit_tsls(&y, &x, &z).unwrap();
            let scale = y.norm();
            let w = DVector::from_element(80, 0.7);
            assert!(numerator(&w, &fit.residuals).unwrap().abs() < 1e-10 * scale);
            if d == p {
                let a = DVector::from_fn(d, |_, _| rng.normal());
                let w = &z * a;
                assert!(numerator(&w, &fit.residuals).unwrap().abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn correction_vector_zero_cases() {
        let m = DMatrix::from_element(2, 3, 1.0);
        let x = DMatrix::from_element(5, 2, 2.0);
        assert!(correction_vector(&DVector::zeros(5), &x, &m).unwrap().iter().all(|&v| v == 0.0));
        let w = DVector::from_element(5, 1.0);
        assert!(correction_vector(&w, &DMatrix::zeros(5, 2), &m).unwrap().iter().all(|&v| v == 0.0));
        assert!(correction_vector(&w, &x, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn correction_vector_matches_naive_loop() {
        let mut rng = Stream::new(Domain::Simulation, 12, 0, 0);
        let (y, x, z) = random_instance(&mut rng, 60, 2, 3);
        let fit = fit_tsls(&y, &x, &z).unwrap();
        let w = DVector::from_fn(60, |_, _| rng.uniform() * 2.0 - 1.0);
        let a = correction_vector(&w, &x, &fit.m_hat).unwrap();
        for k in 0..3 {
            let mut acc = 0.0;
            for j in 0..2 {
                let mut mean = 0.0;
                for i in 0..60 {
                    mean += w[i] * x[(i, j)];
                }
                acc += mean / 60.0 * fit.m_hat[(j, k)];
            }
            assert!((a[k] + acc).abs() <= 1e-12 * (1.0 + acc.abs()));
        }
    }

    #[test]
    fn variance_zero_cases() {
        let z = DMatrix::from_element(6, 2, 1.0);
        let w = DVector::from_element(6, 0.5);
        let a = DVector::from_column_slice(&[0.1, -0.2]);
        let zero = DVector::zeros(6);
        assert_eq!(sigma_het(&w, &z, &zero, &a).unwrap(), 0.0);
        assert_eq!(sigma_hom(&w, &z, &zero, &a).unwrap(), 0.0);
        let ids = vec![0, 0, 1, 1, 2, 2];
        assert_eq!(sigma_cluster(&w, &z, &zero, &a, &ids).unwrap(), 0.0);
        let r = DVector::from_column_slice(&[1.0, 2.0, -1.0, 0.0, 3.0, 1.0]);
        assert_eq!(sigma_het(&zero, &z, &r, &DVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn hom_with_unit_factor_is_mean_squared_residual() {
        let z = DMatrix::from_element(4, 1, 1.0);
        let w = DVector::from_element(4, 1.0);
        let r = DVector::from_column_slice(&[1.0, -2.0, 3.0, 0.0]);
        let v = sigma_hom(&w, &z, &r, &DVector::zeros(1)).unwrap();
        assert!((v - 14.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn cluster_errors() {
        let z = DMatrix::from_element(4, 1, 1.0);
        let w = DVector::from_element(4, 1.0);
        let r = DVector::from_element(4, 1.0);
        let a = DVector::zeros(1);
        assert!(matches!(
            sigma_cluster(&w, &z, &r, &a, &[3, 3, 3, 3]),
            Err(RpivError::TooFewClusters(1))
        ));
        assert!(sigma_cluster(&w, &z, &r, &a, &[0, 1]).is_err());
    }

    #[test]
    fn p_value_properties() {
        assert_eq!(p_value(0.0, 1.0, 0.01).1, 0.5);
        let (_, p1) = p_value(1.0, 0.5, 0.01);
        let (_, p2) = p_value(2.0, 0.5, 0.01);
        assert!(p2 < p1);
        // raising the floor cannot lower the p-value
        let (_, lo) = p_value(1.0, 0.1, 0.01);
        let (_, hi) = p_value(1.0, 0.1, 1.0);
        assert!(hi >= lo);
        assert!(p_value(1e300, 0.0, 1e-300).1 < 1e-300);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(doubled_median(&[0.3; 7]), 0.6);
        assert_eq!(doubled_median(&[0.8, 0.9]), 1.0);
    }

    fn null_dataset(n: usize, seed: u64, clustered: bool) -> AugmentedDataset {
        let mut rng = Stream::new(Domain::Simulation, seed, 0, 0);
        let z = DMatrix::from_fn(n, 1, |_, _| rng.normal());
        let h = DVector::from_fn(n, |_, _| rng.normal());
        let x = DMatrix::from_fn(n, 1, |i, _| z[i] + h[i] + rng.normal());
        let y = DVector::from_fn(n, |i, _| 1.0 + 0.5 * x[i] + h[i] + 0.5 * rng.normal());
        let ids = clustered.then(|| (0..n).map(|i| i / 4).collect());
        Dataset::new(y, x, z, None, ids, None).unwrap().augment().unwrap()
    }

    #[derive(Debug)]
    struct Zero;
    impl crate::weight::Predictor for Zero {
        fn predict(&self, z: &DMatrix<f64>) -> DVector<f64> {
            DVector::zeros(z.nrows())
        }
    }
    #[derive(Debug)]
    struct ZeroRegressor;
    impl Regressor for ZeroRegressor {
        fn fit(&self, _: &DMatrix<f64>, _: &DVector<f64>, _: u64) -> Result<Arc<dyn crate::weight::Predictor>> {
            Ok(Arc::new(Zero))
        }
        fn name(&self) -> String {
            "zero".into()
        }
    }

    #[test]
    fn zero_weight_gives_half() {
        let ds = null_dataset(100, 1, false);
        let cfg = TestConfig {
            regressor: Arc::new(ZeroRegressor),
            ..TestConfig::default()
        };
        let out = run_test(&ds, &cfg).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 0.5);
        assert_eq!(out.clip_k, None);
    }

    #[test]
    fn run_test_is_deterministic_and_reports_sizes() {
        let ds = null_dataset(200, 2, false);
        let cfg = TestConfig {
            seed: 17,
            ..TestConfig::default()
        };
        let a = run_test(&ds, &cfg).unwrap();
        let b = run_test(&ds, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_a + a.n_0, 200);
        assert!((0.0..=1.0).contains(&a.p_value));
        assert!(a.statistic.is_finite());
        assert!((a.p_value - normal::upper_tail(a.statistic)).abs() == 0.0);
    }

    #[test]
    fn cluster_kind_requires_labels() {
        let ds = null_dataset(100, 3, false);
        let cfg = TestConfig {
            variance_kind: VarianceKind::ClusterRobust,
            ..TestConfig::default()
        };
        assert!(matches!(run_test(&ds, &cfg), Err(RpivError::ClusterRequired)));
        let ds = null_dataset(100, 3, true);
        assert!(run_test(&ds, &cfg).is_ok());
    }

    #[test]
    fn aggregation_single_split() {
        let ds = null_dataset(120, 4, false);
        let cfg = TestConfig {
            seed: 5,
            regressor: Arc::new(RandomForestRegressor {
                grid: Some(vec![crate::forest::ForestParams {
                    num_trees: 20,
                    min_leaf: 5,
                    max_features: 2,
                    max_depth: None,
                }]),
            }),
            ..TestConfig::default()
        };
        let agg = run_aggregated(&ds, &cfg, 1).unwrap();
        assert_eq!(agg.per_split.len(), 1);
        assert_eq!(agg.aggregated_p, (2.0 * agg.per_split[0].p_value).min(1.0));
        assert!(run_aggregated(&ds, &cfg, 0).is_err());
        let agg4 = run_aggregated(&ds, &cfg, 4).unwrap();
        assert_eq!(agg4, run_aggregated(&ds, &cfg, 4).unwrap());
    }
}
