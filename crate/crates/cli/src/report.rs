//! Report layout. Field order in these structs is the key order of the JSON
//! output.

use rpiv::sim::{Method, RejectionReport, Setting, Violation};
use rpiv::{AggregateOutcome, AugmentedDataset, ColumnRoles, JTestOutcome, RpivError, TestOutcome, VarianceKind};
use serde::Serialize;

#[derive(Serialize)]
pub struct Report<'a, C: Serialize, R: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a C,
    result: &'a R,
}

impl<'a, C: Serialize, R: Serialize> Report<'a, C, R> {
    pub fn new(command: &'static str, config: &'a C, result: &'a R) -> Self {
        Report {
            tool: "rpiv",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Serialize)]
pub struct TestEcho {
    pub data: String,
    pub roles: ColumnRoles,
    pub variance: VarianceKind,
    pub splits: usize,
    pub clip_quantile: f64,
    pub gamma_frac: f64,
    pub seed: u64,
    pub regressor: String,
}

#[derive(Serialize)]
pub struct JTestEcho {
    pub data: String,
    pub roles: ColumnRoles,
    pub augment_square: Option<String>,
}

#[derive(Serialize)]
pub struct SimulateEcho {
    pub setting: Setting,
    pub n: usize,
    pub reps: usize,
    pub violation: Violation,
    pub strengths: Vec<f64>,
    pub cluster_size: Option<usize>,
    pub cluster_strength: f64,
    pub methods: Vec<Method>,
    pub alpha: f64,
    pub seed: u64,
    pub clip_quantile: f64,
    pub gamma_frac: f64,
}

#[derive(Serialize)]
pub struct TestResult {
    pub n: usize,
    pub regressors: Vec<String>,
    pub instruments: Vec<String>,
    pub aggregated_p: f64,
    pub per_split: Vec<TestOutcome>,
}

impl TestResult {
    pub fn new(ds: &AugmentedDataset, outcome: AggregateOutcome) -> Self {
        TestResult {
            n: ds.n(),
            regressors: ds.x_names.clone(),
            instruments: ds.z_names.clone(),
            aggregated_p: outcome.aggregated_p,
            per_split: outcome.per_split,
        }
    }
}

#[derive(Serialize)]
pub struct JTestResult {
    pub n: usize,
    pub instruments: Vec<String>,
    #[serde(flatten)]
    pub outcome: JTestOutcome,
}

#[derive(Serialize)]
pub struct SimulateResult {
    pub reports: Vec<RejectionReport>,
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, RpivError> {
    let bytes = w.into_inner().map_err(|e| RpivError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per split; the aggregated p-value is repeated on every row.
pub fn test_csv(result: &TestResult) -> Result<String, RpivError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "split", "seed", "variance", "n_a", "n_0", "numerator", "sigma_hat", "gamma",
        "statistic", "p_value", "clip_k", "degenerate", "aggregated_p",
    ])?;
    for (k, o) in result.per_split.iter().enumerate() {
        w.write_record([
            k.to_string(),
            o.seed.to_string(),
            o.variance_kind.to_string(),
            o.n_a.to_string(),
            o.n_0.to_string(),
            o.numerator.to_string(),
            o.sigma_hat.to_string(),
            o.gamma.to_string(),
            o.statistic.to_string(),
            o.p_value.to_string(),
            o.clip_k.map(|k| k.to_string()).unwrap_or_default(),
            o.degenerate.to_string(),
            result.aggregated_p.to_string(),
        ])?;
    }
    finish(w)
}

pub fn jtest_csv(result: &JTestResult) -> Result<String, RpivError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "statistic", "dof", "p_value"])?;
    let o = &result.outcome;
    w.write_record([
        result.n.to_string(),
        o.statistic.to_string(),
        o.dof.to_string(),
        o.p_value.to_string(),
    ])?;
    finish(w)
}
