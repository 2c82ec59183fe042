//! Monte-Carlo harness: the four simulation designs, their violations, the
//! clustered-noise variant, and rejection-rate experiments.
//!
//! Shared variables of every design:
//!
//! ```text
//! C1, C2, H ~ N(0,1)      δ = sign(H) + 0.5·N(0,1)      η = H + 0.5·N(0,1)
//! just:  Z = 0.5·C1 - 0.5·C2 + N(0,1),   X = Z - 0.5·C1 + δ
//! over:  Z1 = 0.5·C1 - 0.5·C2 + N(0,1),  Z2 = N(0,1),  X = Z1 - 0.5·Z2 - 0.5·C1 + δ
//! Y = 2 - X - 0.5·C1 + C2 + η        (heteroskedastic: η·Z² resp. η·Z1²)
//! ```
//!
//! With clusters of size `m`, every standard normal draw of observation `i`
//! is replaced by `s·R_g(i) + (1-s)·S_i`, where `R` is shared within cluster
//! `g(i) = ⌊i/m⌋` and `S` is idiosyncratic. Each variable draws from its own
//! keyed stream, so `s = 0` reproduces the i.i.d. design exactly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnRoles, Dataset};
use crate::error::{Result, RpivError};
use crate::jtest::{dieterle_augment, sargan};
use crate::rng::{derive_seed, Domain, Stream};
use crate::rptest::{run_test_kinds, TestConfig, VarianceKind, DEFAULT_GAMMA_FRAC};
use crate::weight::{RandomForestRegressor, DEFAULT_CLIP_QUANTILE};

macro_rules! kebab_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }
        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $name {
            type Err = RpivError;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(RpivError::InvalidConfig(format!(
                        concat!("unknown ", stringify!($name), " {:?}"), other
                    ))),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    JustHom,
    JustHet,
    OverHom,
    OverHet,
}

kebab_enum!(Setting {
    JustHom => "just-hom",
    JustHet => "just-het",
    OverHom => "over-hom",
    OverHet => "over-het",
});

impl Setting {
    pub fn overidentified(self) -> bool {
        matches!(self, Setting::OverHom | Setting::OverHet)
    }

    pub fn heteroskedastic(self) -> bool {
        matches!(self, Setting::JustHet | Setting::OverHet)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Violation {
    None,
    ZSquared,
    SignZ,
    MisspecSquared,
    MisspecSign,
}

kebab_enum!(Violation {
    None => "none",
    ZSquared => "z-squared",
    SignZ => "sign-z",
    MisspecSquared => "misspec-squared",
    MisspecSign => "misspec-sign",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RpHet,
    RpHom,
    RpCluster,
    OveridJ,
}

kebab_enum!(Method {
    RpHet => "rp-het",
    RpHom => "rp-hom",
    RpCluster => "rp-cluster",
    OveridJ => "overid-j",
});

impl Method {
    fn variance_kind(self) -> Option<VarianceKind> {
        match self {
            Method::RpHet => Some(VarianceKind::Heteroskedastic),
            Method::RpHom => Some(VarianceKind::Homoskedastic),
            Method::RpCluster => Some(VarianceKind::ClusterRobust),
            Method::OveridJ => None,
        }
    }
}

fn default_cluster_size() -> Option<usize> {
    None
}
fn default_alpha() -> f64 {
    0.05
}
fn default_clip() -> f64 {
    DEFAULT_CLIP_QUANTILE
}
fn default_gamma() -> f64 {
    DEFAULT_GAMMA_FRAC
}

/// One simulation design and experiment size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub setting: Setting,
    pub n: usize,
    pub violation: Violation,
    /// Violation strength `t ≥ 0`.
    pub strength: f64,
    /// Within-cluster dependence `s ∈ [0, 1]`.
    pub cluster_strength: f64,
    /// Cluster size; `None` means no cluster labels at all.
    #[serde(default = "default_cluster_size")]
    pub cluster_size: Option<usize>,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub master_seed: u64,
    #[serde(default = "default_clip")]
    pub clip_quantile: f64,
    #[serde(default = "default_gamma")]
    pub gamma_frac: f64,
}

impl SimSpec {
    pub fn new(setting: Setting, n: usize, reps: usize, master_seed: u64) -> Self {
        SimSpec {
            setting,
            n,
            violation: Violation::None,
            strength: 0.0,
            cluster_strength: 0.0,
            cluster_size: None,
            reps,
            alpha: 0.05,
            master_seed,
            clip_quantile: DEFAULT_CLIP_QUANTILE,
            gamma_frac: DEFAULT_GAMMA_FRAC,
        }
    }

    pub fn with_violation(mut self, violation: Violation, strength: f64) -> Self {
        self.violation = violation;
        self.strength = strength;
        self
    }

    pub fn with_clusters(mut self, size: usize, strength: f64) -> Self {
        self.cluster_size = Some(size);
        self.cluster_strength = strength;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RpivError::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return bad(format!("strength must be non-negative, got {}", self.strength));
        }
        if !(0.0..=1.0).contains(&self.cluster_strength) {
            return bad(format!(
                "cluster strength must lie in [0, 1], got {}",
                self.cluster_strength
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        match self.cluster_size {
            None if self.cluster_strength > 0.0 => {
                return bad("cluster strength > 0 needs a cluster size".into())
            }
            Some(0) => return bad("cluster size must be positive".into()),
            Some(m) if self.n % m != 0 => {
                return bad(format!("n = {} is not divisible by cluster size {m}", self.n))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
#[repr(u64)]
enum Var {
    C1 = 1,
    C2 = 2,
    H = 3,
    DeltaNoise = 4,
    EtaNoise = 5,
    ZNoise = 6,
    Z2 = 7,
}

/// Offset between the idiosyncratic and the cluster-shared stream of a variable.
const SHARED_TAG: u64 = 1 << 32;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

struct Draws<'a> {
    spec: &'a SimSpec,
    rep: u64,
}

impl Draws<'_> {
    /// n standard normal draws (or their clustered mixture) for `var`.
    fn normals(&self, var: Var) -> Vec<f64> {
        let n = self.spec.n;
        let seed = self.spec.master_seed;
        let mut own = Stream::new(Domain::Simulation, seed, self.rep, var as u64);
        let idio: Vec<f64> = (0..n).map(|_| own.normal()).collect();
        let s = self.spec.cluster_strength;
        match self.spec.cluster_size {
            Some(m) if s > 0.0 => {
                let mut shared_rng =
                    Stream::new(Domain::Simulation, seed, self.rep, var as u64 + SHARED_TAG);
                let shared: Vec<f64> = (0..n / m).map(|_| shared_rng.normal()).collect();
                idio.iter()
                    .enumerate()
                    .map(|(i, &si)| s * shared[i / m] + (1.0 - s) * si)
                    .collect()
            }
            _ => idio,
        }
    }
}

/// Draws replication `rep` of `spec`.
pub fn generate(spec: &SimSpec, rep: u64) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.n;
    let draws = Draws { spec, rep };
    let c1 = draws.normals(Var::C1);
    let c2 = draws.normals(Var::C2);
    let h = draws.normals(Var::H);
    let dn = draws.normals(Var::DeltaNoise);
    let en = draws.normals(Var::EtaNoise);
    let zn = draws.normals(Var::ZNoise);
    let z2 = spec.setting.overidentified().then(|| draws.normals(Var::Z2));

    let mut y = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut z1 = vec![0.0; n];
    for i in 0..n {
        let delta = sign(h[i]) + 0.5 * dn[i];
        let eta = h[i] + 0.5 * en[i];
        z1[i] = 0.5 * c1[i] - 0.5 * c2[i] + zn[i];
        x[i] = match &z2 {
            None => z1[i] - 0.5 * c1[i] + delta,
            Some(z2) => z1[i] - 0.5 * z2[i] - 0.5 * c1[i] + delta,
        };
        let noise = if spec.setting.heteroskedastic() {
            eta * z1[i] * z1[i]
        } else {
            eta
        };
        y[i] = 2.0 - x[i] - 0.5 * c1[i] + c2[i] + noise;
        let t = spec.strength;
        if t != 0.0 {
            let structural = -x[i] - 0.5 * c1[i] + c2[i];
            y[i] += match spec.violation {
                Violation::None => 0.0,
                Violation::ZSquared => t * z1[i] * z1[i],
                Violation::SignZ => t * sign(z1[i]),
                Violation::MisspecSquared => t * structural * structural,
                Violation::MisspecSign => t * sign(structural),
            };
        }
    }

    let (z, instruments) = match z2 {
        None => (DMatrix::from_vec(n, 1, z1), vec!["Z".to_string()]),
        Some(z2) => {
            let mut cols = z1;
            cols.extend(z2);
            (DMatrix::from_vec(n, 2, cols), vec!["Z1".into(), "Z2".into()])
        }
    };
    let mut controls = c1;
    controls.extend(c2);
    let cluster_ids = spec.cluster_size.map(|m| (0..n).map(|i| i / m).collect());
    let names = ColumnRoles {
        response: "Y".into(),
        endogenous: vec!["X".into()],
        instruments,
        controls: vec!["C1".into(), "C2".into()],
        cluster: spec.cluster_size.map(|_| "cluster".into()),
    };
    Dataset::new(
        DVector::from_vec(y),
        DMatrix::from_vec(n, 1, x),
        z,
        Some(DMatrix::from_vec(n, 2, controls)),
        cluster_ids,
        Some(names),
    )
}

/// Rejection rate of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRate {
    pub method: Method,
    /// Rejections over successful replications.
    pub rate: f64,
    /// `√(rate·(1-rate)/successes)`.
    pub se: f64,
    pub rejections: usize,
    pub successes: usize,
    /// Replications where the method could not be computed.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub spec: SimSpec,
    pub methods: Vec<MethodRate>,
}

impl RejectionReport {
    pub fn rate(&self, method: Method) -> Option<f64> {
        self.methods.iter().find(|m| m.method == method).map(|m| m.rate)
    }
}

/// Report plus every replication's p-value (`None` for a failed replication).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: RejectionReport,
    pub p_values: BTreeMap<Method, Vec<Option<f64>>>,
}

fn replicate(spec: &SimSpec, methods: &[Method], rep: u64) -> Vec<Option<f64>> {
    let mut out = vec![None; methods.len()];
    let Ok(ds) = generate(spec, rep).and_then(|d| d.augment()) else {
        return out;
    };
    let kinds: Vec<VarianceKind> = methods.iter().filter_map(|m| m.variance_kind()).collect();
    if !kinds.is_empty() {
        let cfg = TestConfig {
            variance_kind: kinds[0],
            clip_quantile: spec.clip_quantile,
            gamma_frac: spec.gamma_frac,
            seed: derive_seed(spec.master_seed, rep),
            regressor: Arc::new(RandomForestRegressor::default()),
        };
        if let Ok(outcomes) = run_test_kinds(&ds, &cfg, &kinds) {
            for (slot, m) in out.iter_mut().zip(methods) {
                if let Some(k) = m.variance_kind() {
                    *slot = outcomes
                        .iter()
                        .find(|o| o.variance_kind == k)
                        .map(|o| o.p_value);
                }
            }
        }
    }
    if let Some(j) = methods.iter().position(|&m| m == Method::OveridJ) {
        let j_data = if spec.setting.overidentified() {
            Ok(ds)
        } else {
            dieterle_augment(&ds, 0)
        };
        out[j] = j_data.and_then(|d| sargan(&d)).ok().map(|o| o.p_value);
    }
    out
}

/// Runs `spec.reps` replications and records each method's p-values.
pub fn run_experiment(spec: &SimSpec, methods: &[Method]) -> Result<ExperimentRun> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(RpivError::InvalidConfig("no methods selected".into()));
    }
    if methods.contains(&Method::RpCluster) && spec.cluster_size.is_none() {
        return Err(RpivError::InvalidConfig("rp-cluster needs a cluster size".into()));
    }
    let mut methods: Vec<Method> = methods.to_vec();
    methods.sort_unstable();
    methods.dedup();
    let per_rep: Vec<Vec<Option<f64>>> = (0..spec.reps as u64)
        .into_par_iter()
        .map(|rep| replicate(spec, &methods, rep))
        .collect();
    let mut p_values = BTreeMap::new();
    let mut rates = Vec::new();
    for (k, &method) in methods.iter().enumerate() {
        let ps: Vec<Option<f64>> = per_rep.iter().map(|r| r[k]).collect();
        let successes = ps.iter().flatten().count();
        let rejections = ps.iter().flatten().filter(|&&p| p <= spec.alpha).count();
        let rate = if successes > 0 {
            rejections as f64 / successes as f64
        } else {
            0.0
        };
        let se = if successes > 0 {
            (rate * (1.0 - rate) / successes as f64).sqrt()
        } else {
            0.0
        };
        rates.push(MethodRate {
            method,
            rate,
            se,
            rejections,
            successes,
            failures: spec.reps - successes,
        });
        p_values.insert(method, ps);
    }
    Ok(ExperimentRun {
        report: RejectionReport {
            spec: spec.clone(),
            methods: rates,
        },
        p_values,
    })
}

/// Rejection rates at level `spec.alpha`.
pub fn rejection_experiment(spec: &SimSpec, methods: &[Method]) -> Result<RejectionReport> {
    Ok(run_experiment(spec, methods)?.report)
}

/// One experiment per strength. Every point reuses the template's master
/// seed, so the curve is built from common random numbers and the `t = 0`
/// point is the size experiment.
pub fn power_curve(
    template: &SimSpec,
    strengths: &[f64],
    methods: &[Method],
) -> Result<Vec<RejectionReport>> {
    strengths
        .iter()
        .map(|&t| {
            let mut spec = template.clone();
            spec.strength = t;
            rejection_experiment(&spec, methods)
        })
        .collect()
}

/// Tidy CSV: one row per (report, method).
pub fn reports_to_csv(reports: &[RejectionReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "setting", "n", "violation", "strength", "s", "method", "rate", "se", "reps", "failures",
    ])?;
    for r in reports {
        for m in &r.methods {
            w.write_record([
                r.spec.setting.to_string(),
                r.spec.n.to_string(),
                r.spec.violation.to_string(),
                r.spec.strength.to_string(),
                r.spec.cluster_strength.to_string(),
                m.method.to_string(),
                m.rate.to_string(),
                m.se.to_string(),
                r.spec.reps.to_string(),
                m.failures.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| RpivError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
