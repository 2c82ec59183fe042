//! Residual prediction test for the well-specification of linear
//! instrumental-variable models.
//!
//! The test splits the sample, learns on the auxiliary part a bounded
//! function `ŵ` of the instruments that predicts the 2SLS residuals, and on
//! the main part checks whether `ŵ(Z)` is correlated with the residuals,
//! correcting the variance for the estimation error in `β̂`.
//!
//! ```no_run
//! use rpiv::{ColumnRoles, Dataset, TestConfig, run_aggregated};
//!
//! let roles = ColumnRoles {
//!     response: "lwage".into(),
//!     endogenous: vec!["educ".into()],
//!     instruments: vec!["nearc4".into()],
//!     controls: vec!["exper".into(), "expersq".into()],
//!     cluster: None,
//! };
//! let ds = Dataset::load_csv("card.csv", &roles)?.augment()?;
//! let outcome = run_aggregated(&ds, &TestConfig::default(), 50)?;
//! println!("p = {}", outcome.aggregated_p);
//! # Ok::<(), rpiv::RpivError>(())
//! ```

pub mod data;
mod error;
pub mod forest;
pub mod iv;
pub mod jtest;
pub mod normal;
pub mod rng;
pub mod rptest;
pub mod sim;
pub mod weight;

pub use data::{AugmentedDataset, ColumnRoles, Dataset, SplitPlan, make_split};
pub use error::{ErrorClass, Result, RpivError};
pub use forest::{ForestModel, ForestParams, fit_forest};
pub use iv::{TwoSlsFit, fit_ols, fit_tsls};
pub use jtest::{JTestOutcome, dieterle_augment, sargan};
pub use rptest::{
    AggregateOutcome, TestConfig, TestOutcome, VarianceKind, correction_vector, numerator,
    run_aggregated, run_test, sigma_cluster, sigma_het, sigma_hom,
};
pub use sim::{Method, RejectionReport, Setting, SimSpec, Violation, generate, power_curve, rejection_experiment};
pub use weight::{RandomForestRegressor, Regressor, WeightFunction, learn_weight};
