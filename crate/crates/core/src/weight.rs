//! Learning the weight function on the auxiliary sample.
//!
//! The auxiliary 2SLS residuals are regressed on the (augmented) instruments
//! with a user-chosen learner, and the fitted function `ŵ₀` is clipped and
//! rescaled to `ŵ(z) = clamp(ŵ₀(z), -K, K) / K`, which takes values in
//! `[-1, 1]`.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::AugmentedDataset;
use crate::error::{Result, RpivError};
use crate::forest::{self, ForestModel, ForestParams};
use crate::iv::fit_tsls;

/// Default quantile of `|ŵ₀|` used as the clipping level.
pub const DEFAULT_CLIP_QUANTILE: f64 = 0.9;

/// A fitted regression function of the instruments.
pub trait Predictor: Send + Sync + Debug {
    fn predict(&self, features: &DMatrix<f64>) -> DVector<f64>;
}

/// A learner: `fit` must be deterministic given `seed`.
pub trait Regressor: Send + Sync + Debug {
    fn fit(
        &self,
        features: &DMatrix<f64>,
        targets: &DVector<f64>,
        seed: u64,
    ) -> Result<Arc<dyn Predictor>>;

    fn name(&self) -> String;
}

impl Predictor for ForestModel {
    fn predict(&self, features: &DMatrix<f64>) -> DVector<f64> {
        ForestModel::predict(self, features)
    }
}

/// Random forest tuned by out-of-bag error over a hyperparameter grid.
/// With `grid: None` the grid is [`forest::default_grid`].
#[derive(Debug, Clone, Default)]
pub struct RandomForestRegressor {
    pub grid: Option<Vec<ForestParams>>,
}

impl Regressor for RandomForestRegressor {
    fn fit(
        &self,
        features: &DMatrix<f64>,
        targets: &DVector<f64>,
        seed: u64,
    ) -> Result<Arc<dyn Predictor>> {
        let model = match &self.grid {
            Some(grid) => forest::fit_forest_grid(features, targets, grid, seed)?,
            None => forest::fit_forest(features, targets, seed)?,
        };
        Ok(Arc::new(model))
    }

    fn name(&self) -> String {
        "random_forest".into()
    }
}

/// `clamp(w0, -k, k) / k`, i.e. `sign(w0)·min(|w0|, k)/k`.
pub fn clip(w0: f64, k: f64) -> f64 {
    w0.clamp(-k, k) / k
}

/// Linear interpolation between order statistics (R's type 7).
pub fn quantile_type7(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// `ŵ`, a clipped and rescaled regression function with values in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct WeightFunction {
    base: Arc<dyn Predictor>,
    /// `None` when every in-sample prediction was zero; `ŵ` is then `0`.
    clip_k: Option<f64>,
}

impl WeightFunction {
    pub fn new(base: Arc<dyn Predictor>, clip_k: Option<f64>) -> Result<Self> {
        if let Some(k) = clip_k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(RpivError::InvalidConfig(format!(
                    "clipping level must be positive, got {k}"
                )));
            }
        }
        Ok(WeightFunction { base, clip_k })
    }

    pub fn clip_k(&self) -> Option<f64> {
        self.clip_k
    }

    pub fn is_zero(&self) -> bool {
        self.clip_k.is_none()
    }

    /// Unclipped `ŵ₀`.
    pub fn raw(&self, z: &DMatrix<f64>) -> DVector<f64> {
        self.base.predict(z)
    }

    /// `ŵ(Z_i)` for every row of `z`.
    pub fn evaluate(&self, z: &DMatrix<f64>) -> DVector<f64> {
        match self.clip_k {
            None => DVector::zeros(z.nrows()),
            Some(k) => self.base.predict(z).map(|w0| clip(w0, k)),
        }
    }
}

/// Fits 2SLS on `aux`, regresses its residuals on `aux.z` with `regressor`
/// and sets `K` to the `clip_quantile` quantile of `|ŵ₀|` on `aux`
/// (falling back to `max |ŵ₀|`).
pub fn learn_weight(
    aux: &AugmentedDataset,
    regressor: &dyn Regressor,
    clip_quantile: f64,
    seed: u64,
) -> Result<WeightFunction> {
    if !(clip_quantile > 0.0 && clip_quantile < 1.0) {
        return Err(RpivError::InvalidConfig(format!(
            "clip quantile must lie in (0, 1), got {clip_quantile}"
        )));
    }
    let fit = fit_tsls(&aux.y, &aux.x, &aux.z)?;
    let base = regressor.fit(&aux.z, &fit.residuals, seed)?;
    let fitted = base.predict(&aux.z);
    weight_from_predictions(base, fitted.as_slice(), clip_quantile)
}

/// Chooses `K` from in-sample predictions and wraps `base`.
pub fn weight_from_predictions(
    base: Arc<dyn Predictor>,
    in_sample: &[f64],
    clip_quantile: f64,
) -> Result<WeightFunction> {
    let abs: Vec<f64> = in_sample.iter().map(|v| v.abs()).collect();
    let mut k = quantile_type7(&abs, clip_quantile);
    if k == 0.0 {
        k = abs.iter().copied().fold(0.0, f64::max);
    }
    let clip_k = (k > 0.0 && k.is_finite()).then_some(k);
    WeightFunction::new(base, clip_k)
}
