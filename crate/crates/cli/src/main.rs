use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rpiv::sim::{self, Method, Setting, SimSpec, Violation};
use rpiv::weight::Regressor;
use rpiv::{
    dieterle_augment, run_aggregated, sargan, ColumnRoles, Dataset, ErrorClass,
    RandomForestRegressor, RpivError, TestConfig, VarianceKind,
};

mod report;

use report::{JTestEcho, Report, SimulateEcho, TestEcho};

#[derive(Parser)]
#[command(name = "rpiv", version, about = "Residual prediction test for linear IV models")]
struct Cli {
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true, env = "RPIV_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the residual prediction test on a CSV file.
    Test(TestArgs),
    /// Run a Monte-Carlo rejection-rate experiment.
    Simulate(SimulateArgs),
    /// Sargan overidentification test on a CSV file.
    Jtest(JTestArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Output {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    response: String,
    #[arg(long, value_delimiter = ',', required = true)]
    endogenous: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    instruments: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    #[arg(long)]
    cluster_col: Option<String>,
}

impl DataArgs {
    fn roles(&self) -> ColumnRoles {
        ColumnRoles {
            response: self.response.clone(),
            endogenous: self.endogenous.clone(),
            instruments: self.instruments.clone(),
            controls: self.controls.clone(),
            cluster: self.cluster_col.clone(),
        }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "het")]
    variance: VarianceKind,
    #[arg(long, default_value_t = rpiv::rptest::DEFAULT_SPLITS)]
    splits: usize,
    #[arg(long, default_value_t = rpiv::weight::DEFAULT_CLIP_QUANTILE)]
    clip_quantile: f64,
    #[arg(long, default_value_t = rpiv::rptest::DEFAULT_GAMMA_FRAC)]
    gamma_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct JTestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Append the square of this instrument before testing.
    #[arg(long)]
    augment_square: Option<String>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setting: Setting,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value = "none")]
    violation: Violation,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    strengths: Vec<f64>,
    #[arg(long)]
    cluster_size: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    cluster_strength: f64,
    /// Defaults to rp-het, rp-hom and overid-j, plus rp-cluster with clusters.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = rpiv::weight::DEFAULT_CLIP_QUANTILE)]
    clip_quantile: f64,
    #[arg(long, default_value_t = rpiv::rptest::DEFAULT_GAMMA_FRAC)]
    gamma_frac: f64,
    #[command(flatten)]
    output: Output,
}

fn emit(output: &Output, json: impl FnOnce() -> String, csv: impl FnOnce() -> Result<String, RpivError>) -> Result<(), RpivError> {
    let text = match output.format {
        Format::Json => json(),
        Format::Csv => csv()?,
    };
    match &output.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_test(args: TestArgs) -> Result<(), RpivError> {
    if args.variance == VarianceKind::ClusterRobust && args.data.cluster_col.is_none() {
        return Err(RpivError::ClusterRequired);
    }
    let roles = args.data.roles();
    let ds = Dataset::load_csv(&args.data.data, &roles)?.augment()?;
    let regressor = RandomForestRegressor::default();
    let name = regressor.name();
    let cfg = TestConfig {
        variance_kind: args.variance,
        clip_quantile: args.clip_quantile,
        gamma_frac: args.gamma_frac,
        seed: args.seed,
        regressor: Arc::new(regressor),
    };
    let outcome = run_aggregated(&ds, &cfg, args.splits)?;
    let echo = TestEcho {
        data: args.data.data.display().to_string(),
        roles,
        variance: args.variance,
        splits: args.splits,
        clip_quantile: args.clip_quantile,
        gamma_frac: args.gamma_frac,
        seed: args.seed,
        regressor: name,
    };
    let result = report::TestResult::new(&ds, outcome);
    emit(
        &args.output,
        || Report::new("test", &echo, &result).to_json(),
        || report::test_csv(&result),
    )
}

fn cmd_jtest(args: JTestArgs) -> Result<(), RpivError> {
    let roles = args.data.roles();
    let mut ds = Dataset::load_csv(&args.data.data, &roles)?.augment()?;
    if let Some(col) = &args.augment_square {
        let which = roles
            .instruments
            .iter()
            .position(|c| c == col)
            .ok_or_else(|| RpivError::InvalidConfig(format!("{col:?} is not an instrument column")))?;
        ds = dieterle_augment(&ds, which)?;
    }
    let outcome = sargan(&ds)?;
    let echo = JTestEcho {
        data: args.data.data.display().to_string(),
        roles,
        augment_square: args.augment_square.clone(),
    };
    let result = report::JTestResult {
        n: ds.n(),
        instruments: ds.z_names.clone(),
        outcome,
    };
    emit(
        &args.output,
        || Report::new("jtest", &echo, &result).to_json(),
        || report::jtest_csv(&result),
    )
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), RpivError> {
    let mut methods = args.methods.clone();
    if methods.is_empty() {
        methods = vec![Method::RpHet, Method::RpHom, Method::OveridJ];
        if args.cluster_size.is_some() {
            methods.push(Method::RpCluster);
        }
    }
    methods.sort_unstable();
    methods.dedup();
    let mut template = SimSpec::new(args.setting, args.n, args.reps, args.seed);
    template.violation = args.violation;
    template.cluster_size = args.cluster_size;
    template.cluster_strength = args.cluster_strength;
    template.alpha = args.alpha;
    template.clip_quantile = args.clip_quantile;
    template.gamma_frac = args.gamma_frac;
    let reports = sim::power_curve(&template, &args.strengths, &methods)?;
    let echo = SimulateEcho {
        setting: args.setting,
        n: args.n,
        reps: args.reps,
        violation: args.violation,
        strengths: args.strengths.clone(),
        cluster_size: args.cluster_size,
        cluster_strength: args.cluster_strength,
        methods,
        alpha: args.alpha,
        seed: args.seed,
        clip_quantile: args.clip_quantile,
        gamma_frac: args.gamma_frac,
    };
    let result = report::SimulateResult { reports };
    emit(
        &args.output,
        || Report::new("simulate", &echo, &result).to_json(),
        || sim::reports_to_csv(&result.reports),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("rpiv: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Jtest(a) => cmd_jtest(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rpiv: {e}");
            match e.class() {
                ErrorClass::Data => ExitCode::from(2),
                ErrorClass::Rank => ExitCode::from(3),
            }
        }
    }
}
