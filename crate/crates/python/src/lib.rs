//! Python bindings. Matrices cross the boundary as lists of rows.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use nalgebra::{DMatrix, DVector};
use rpiv::sim::{Method, Setting, SimSpec, Violation};
use rpiv::{ErrorClass, RandomForestRegressor, TestConfig, VarianceKind};

create_exception!(rpiv, RpivError, PyException);
create_exception!(rpiv, DataError, RpivError);
create_exception!(rpiv, RankError, RpivError);

fn to_py(e: rpiv::RpivError) -> PyErr {
    match e.class() {
        ErrorClass::Data => DataError::new_err(e.to_string()),
        ErrorClass::Rank => RankError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(DataError::new_err(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse<T: std::str::FromStr<Err = rpiv::RpivError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Observations `(Y, X, Z)` with optional controls and cluster labels.
#[pyclass(frozen, module = "rpiv")]
struct Dataset {
    inner: rpiv::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (y, x, z, controls=None, clusters=None))]
    fn new(
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        controls: Option<Vec<Vec<f64>>>,
        clusters: Option<Vec<usize>>,
    ) -> PyResult<Self> {
        let controls = controls.map(|c| matrix(&c, "controls")).transpose()?;
        let inner = rpiv::Dataset::new(
            DVector::from_vec(y),
            matrix(&x, "x")?,
            matrix(&z, "z")?,
            controls,
            clusters,
            None,
        )
        .map_err(to_py)?;
        Ok(Dataset { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, response, endogenous, instruments, controls=vec![], cluster=None))]
    fn from_csv(
        path: &str,
        response: String,
        endogenous: Vec<String>,
        instruments: Vec<String>,
        controls: Vec<String>,
        cluster: Option<String>,
    ) -> PyResult<Self> {
        let roles = rpiv::ColumnRoles {
            response,
            endogenous,
            instruments,
            controls,
            cluster,
        };
        let inner = rpiv::Dataset::load_csv(path, &roles).map_err(to_py)?;
        Ok(Dataset { inner })
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| to_py(e.into()))?;
        self.inner.write_csv(file).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.iter().copied().collect()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.x)
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.z)
    }

    #[getter]
    fn clusters(&self) -> Option<Vec<usize>> {
        self.inner.cluster_ids.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, endogenous={}, instruments={}, controls={})",
            self.inner.n(),
            self.inner.x.ncols(),
            self.inner.z.ncols(),
            self.inner.controls.as_ref().map_or(0, |c| c.ncols())
        )
    }
}

#[pyclass(frozen, get_all, module = "rpiv")]
struct TwoSlsFit {
    beta_hat: Vec<f64>,
    m_hat: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rpiv")]
#[derive(Clone)]
struct TestOutcome {
    numerator: f64,
    sigma_hat: f64,
    gamma: f64,
    statistic: f64,
    p_value: f64,
    variance: String,
    n_a: usize,
    n_0: usize,
    seed: u64,
    clip_k: Option<f64>,
    degenerate: bool,
}

impl From<rpiv::TestOutcome> for TestOutcome {
    fn from(o: rpiv::TestOutcome) -> Self {
        TestOutcome {
            numerator: o.numerator,
            sigma_hat: o.sigma_hat,
            gamma: o.gamma,
            statistic: o.statistic,
            p_value: o.p_value,
            variance: o.variance_kind.to_string(),
            n_a: o.n_a,
            n_0: o.n_0,
            seed: o.seed,
            clip_k: o.clip_k,
            degenerate: o.degenerate,
        }
    }
}

#[pymethods]
impl TestOutcome {
    fn __repr__(&self) -> String {
        format!("TestOutcome(statistic={}, p_value={})", self.statistic, self.p_value)
    }
}

#[pyclass(frozen, get_all, module = "rpiv")]
struct AggregateOutcome {
    aggregated_p: f64,
    per_split: Vec<TestOutcome>,
}

#[pyclass(frozen, get_all, module = "rpiv")]
struct JTestOutcome {
    statistic: f64,
    dof: usize,
    p_value: f64,
}

#[pyclass(frozen, get_all, module = "rpiv")]
struct MethodRate {
    method: String,
    rate: f64,
    se: f64,
    rejections: usize,
    successes: usize,
    failures: usize,
}

fn augmented(ds: &Dataset) -> PyResult<rpiv::AugmentedDataset> {
    ds.inner.augment().map_err(to_py)
}

fn config(variance: &str, seed: u64, clip_quantile: f64, gamma_frac: f64) -> PyResult<TestConfig> {
    Ok(TestConfig {
        variance_kind: parse::<VarianceKind>(variance)?,
        clip_quantile,
        gamma_frac,
        seed,
        regressor: Arc::new(RandomForestRegressor::default()),
    })
}

/// 2SLS of `y` on `x` with instruments `z`; no intercept is added.
#[pyfunction]
fn fit_tsls(y: Vec<f64>, x: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> PyResult<TwoSlsFit> {
    let fit = rpiv::fit_tsls(&DVector::from_vec(y), &matrix(&x, "x")?, &matrix(&z, "z")?)
        .map_err(to_py)?;
    Ok(TwoSlsFit {
        beta_hat: fit.beta_hat.iter().copied().collect(),
        m_hat: rows(&fit.m_hat),
        residuals: fit.residuals.iter().copied().collect(),
    })
}

/// One split of the residual prediction test.
#[pyfunction]
#[pyo3(signature = (data, variance="het", seed=0, clip_quantile=0.9, gamma_frac=0.05))]
fn run_test(
    py: Python<'_>,
    data: &Dataset,
    variance: &str,
    seed: u64,
    clip_quantile: f64,
    gamma_frac: f64,
) -> PyResult<TestOutcome> {
    let ds = augmented(data)?;
    let cfg = config(variance, seed, clip_quantile, gamma_frac)?;
    let out = py.detach(|| rpiv::run_test(&ds, &cfg)).map_err(to_py)?;
    Ok(out.into())
}

/// Repeated splits combined by the doubled median.
#[pyfunction]
#[pyo3(signature = (data, splits=50, variance="het", seed=0, clip_quantile=0.9, gamma_frac=0.05))]
fn run_aggregated(
    py: Python<'_>,
    data: &Dataset,
    splits: usize,
    variance: &str,
    seed: u64,
    clip_quantile: f64,
    gamma_frac: f64,
) -> PyResult<AggregateOutcome> {
    let ds = augmented(data)?;
    let cfg = config(variance, seed, clip_quantile, gamma_frac)?;
    let out = py
        .detach(|| rpiv::run_aggregated(&ds, &cfg, splits))
        .map_err(to_py)?;
    Ok(AggregateOutcome {
        aggregated_p: out.aggregated_p,
        per_split: out.per_split.into_iter().map(Into::into).collect(),
    })
}

/// Sargan J-test, optionally after appending the square of instrument
/// `augment_square` (a column index into the instruments).
#[pyfunction]
#[pyo3(signature = (data, augment_square=None))]
fn sargan(data: &Dataset, augment_square: Option<usize>) -> PyResult<JTestOutcome> {
    let mut ds = augmented(data)?;
    if let Some(j) = augment_square {
        ds = rpiv::dieterle_augment(&ds, j).map_err(to_py)?;
    }
    let out = rpiv::sargan(&ds).map_err(to_py)?;
    Ok(JTestOutcome {
        statistic: out.statistic,
        dof: out.dof,
        p_value: out.p_value,
    })
}

#[allow(clippy::too_many_arguments)]
fn spec(
    setting: &str,
    n: usize,
    reps: usize,
    seed: u64,
    violation: &str,
    strength: f64,
    cluster_size: Option<usize>,
    cluster_strength: f64,
) -> PyResult<SimSpec> {
    let mut spec = SimSpec::new(parse::<Setting>(setting)?, n, reps, seed)
        .with_violation(parse::<Violation>(violation)?, strength);
    spec.cluster_size = cluster_size;
    spec.cluster_strength = cluster_strength;
    Ok(spec)
}

/// Draws replication `rep` of a simulation design.
#[pyfunction]
#[pyo3(signature = (setting, n, rep=0, seed=0, violation="none", strength=0.0, cluster_size=None, cluster_strength=0.0))]
#[allow(clippy::too_many_arguments)]
fn generate(
    setting: &str,
    n: usize,
    rep: u64,
    seed: u64,
    violation: &str,
    strength: f64,
    cluster_size: Option<usize>,
    cluster_strength: f64,
) -> PyResult<Dataset> {
    let spec = spec(setting, n, 1, seed, violation, strength, cluster_size, cluster_strength)?;
    let inner = rpiv::generate(&spec, rep).map_err(to_py)?;
    Ok(Dataset { inner })
}

/// Rejection rates of the chosen methods over `reps` replications.
#[pyfunction]
#[pyo3(signature = (setting, n, reps, seed=0, methods=vec!["rp-het".to_string(), "rp-hom".to_string(), "overid-j".to_string()], violation="none", strength=0.0, cluster_size=None, cluster_strength=0.0, alpha=0.05))]
#[allow(clippy::too_many_arguments)]
fn rejection_experiment(
    py: Python<'_>,
    setting: &str,
    n: usize,
    reps: usize,
    seed: u64,
    methods: Vec<String>,
    violation: &str,
    strength: f64,
    cluster_size: Option<usize>,
    cluster_strength: f64,
    alpha: f64,
) -> PyResult<Vec<MethodRate>> {
    let mut spec = spec(setting, n, reps, seed, violation, strength, cluster_size, cluster_strength)?;
    spec.alpha = alpha;
    let methods = methods
        .iter()
        .map(|m| parse::<Method>(m))
        .collect::<PyResult<Vec<_>>>()?;
    let report = py
        .detach(|| rpiv::rejection_experiment(&spec, &methods))
        .map_err(to_py)?;
    Ok(report
        .methods
        .into_iter()
        .map(|m| MethodRate {
            method: m.method.to_string(),
            rate: m.rate,
            se: m.se,
            rejections: m.rejections,
            successes: m.successes,
            failures: m.failures,
        })
        .collect())
}

/// Residual prediction test for linear instrumental-variable models.
#[pymodule(name = "rpiv")]
mod rpiv_module {
    #[pymodule_export]
    use super::{
        fit_tsls, generate, rejection_experiment, run_aggregated, run_test, sargan,
        AggregateOutcome, DataError, Dataset, JTestOutcome, MethodRate, RankError, RpivError,
        TestOutcome, TwoSlsFit,
    };
}
