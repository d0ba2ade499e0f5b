use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Deserialize;

use projpost::calibration::{solve_gamma, table_csv, CalibrationQuery, DEFAULT_TABLE_LAMBDAS, DEFAULT_TABLE_TARGETS};
use projpost::fit::fit;
use projpost::io::read_csv_path;
use projpost::limit::{limit_check, limit_check_csv, LimitCheckConfig};
use projpost::sim::{coverage_csv, run_scenario, sparsity_csv, sparsity_sweep, Scenario};
use projpost::{FitConfig, Lambda, PriorConfig};

#[derive(Parser)]
#[command(name = "projpost", version, about = "Sparse projection-posterior credible regions for linear regression")]
struct Cli {
    /// Worker threads (defaults to the number of CPUs)
    #[arg(long, global = true, env = "PROJPOST_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a data set and write credible intervals and model probabilities as JSON
    Fit(FitArgs),
    /// Print the calibrated credibility level for a limiting penalty and target coverage
    Calibrate(CalibrateArgs),
    /// Emit the calibration table as CSV (rows: lambda0, columns: target coverage)
    Table(TableArgs),
    /// Run a coverage simulation from a JSON scenario file and emit CSV
    Simulate(SimulateArgs),
    /// Compare Monte-Carlo limiting coverage with the analytic values, as CSV
    Limitcheck(LimitArgs),
}

#[derive(Args)]
struct FitArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    /// Name of the response column; all other columns are predictors
    #[arg(long, default_value = "y")]
    response: String,
    /// Credibility level used as is
    #[arg(long, conflicts_with = "target")]
    level: Option<f64>,
    /// Target frequentist coverage; the level is calibrated per coefficient
    #[arg(long)]
    target: Option<f64>,
    /// Projection penalty: "auto" for cross-validation or a positive number
    #[arg(long, default_value = "auto")]
    lambda: Lambda,
    /// Prior precision scale a_n
    #[arg(long, default_value_t = 1.0)]
    an: f64,
    /// Inverse-gamma shape b1
    #[arg(long, default_value_t = 0.0)]
    b1: f64,
    /// Inverse-gamma rate b2
    #[arg(long, default_value_t = 0.0)]
    b2: f64,
    /// Number of posterior draws
    #[arg(long, default_value_t = 2000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Center and scale predictors and center the response before fitting
    #[arg(long)]
    standardize: bool,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Limiting penalty lambda_n * sqrt(n)
    #[arg(long)]
    lambda0: f64,
    #[arg(long, default_value_t = 0.95)]
    target: f64,
    /// Limiting Gram diagonal of the coefficient
    #[arg(long, default_value_t = 1.0)]
    c_j: f64,
    /// Error standard deviation
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    #[arg(long, default_value_t = 6)]
    digits: usize,
}

#[derive(Args)]
struct TableArgs {
    #[arg(long, default_value_t = 4)]
    digits: usize,
    /// Comma-separated lambda0 values (default: the standard 37-value grid)
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Comma-separated targets (default: 0.9,0.925,0.95,0.975,0.99)
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON scenario, or a list of scenarios
    #[arg(long)]
    config: PathBuf,
    /// Run a sparsity sweep over these s values (theta0_j = 1 for j < s) instead
    #[arg(long, value_delimiter = ',')]
    sparsity: Option<Vec<usize>>,
    /// Override the replication count of every scenario
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LimitArgs {
    /// JSON configuration; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated signs of the true coefficients (1, -1 or 0)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    signs: Option<Vec<i8>>,
    #[arg(long, value_delimiter = ',')]
    lambda0: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    target: Option<Vec<f64>>,
    #[arg(long)]
    outer: Option<usize>,
    #[arg(long)]
    inner: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be positive");
        }
        pool = pool.num_threads(t);
    }
    pool.build_global().context("building the worker pool")?;

    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Table(args) => cmd_table(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Limitcheck(args) => cmd_limitcheck(args),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let loaded = read_csv_path(&args.data, &args.response, args.standardize)
        .with_context(|| format!("reading {}", args.data.display()))?;
    let prior = PriorConfig {
        a_n: args.an,
        b1: args.b1,
        b2: args.b2,
    };
    let config = FitConfig {
        lambda: args.lambda,
        draws: args.draws,
        seed: args.seed,
        level: args.level.unwrap_or(0.95),
        target_coverage: args.target,
    };
    info!(
        "fitting {} rows, {} predictors, response {:?}",
        loaded.dataset.n(),
        loaded.dataset.p(),
        loaded.response
    );
    let mut report = fit(&loaded.dataset, &prior, &config)?.with_names(&loaded.predictors)?;
    report.standardization = loaded.standardization;
    let mut json = report.to_json()?;
    json.push('\n');
    emit(args.out.as_deref(), &json)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let result = solve_gamma(&CalibrationQuery {
        lambda0: args.lambda0,
        target: args.target,
        c_j: args.c_j,
        sigma0: args.sigma0,
    })?;
    info!(
        "lambda0 {} target {} effective penalty {:.6}: level {:.10}, psi {:.10}, psi0 {:.10}",
        args.lambda0,
        args.target,
        result.effective_lambda,
        result.gamma_level,
        result.psi_at_gamma,
        result.psi0_at_gamma
    );
    println!("{:.*}", args.digits, result.gamma_level);
    Ok(())
}

fn cmd_table(args: TableArgs) -> Result<()> {
    let lambdas = args.lambdas.unwrap_or_else(|| DEFAULT_TABLE_LAMBDAS.to_vec());
    let targets = args.targets.unwrap_or_else(|| DEFAULT_TABLE_TARGETS.to_vec());
    let csv = table_csv(&lambdas, &targets, Some(args.digits))?;
    emit(args.out.as_deref(), &csv)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    One(Scenario),
    Many(Vec<Scenario>),
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut scenarios = match serde_json::from_str(&text).context("parsing scenario JSON")? {
        ScenarioFile::One(s) => vec![s],
        ScenarioFile::Many(v) => v,
    };
    if scenarios.is_empty() {
        bail!("scenario file is empty");
    }
    if let Some(r) = args.replications {
        scenarios.iter_mut().for_each(|s| s.replications = r);
    }
    let csv = match &args.sparsity {
        Some(s_values) => {
            let mut reports = Vec::new();
            for scenario in &scenarios {
                info!("sparsity sweep: seed {} n {}", scenario.seed, scenario.n);
                for (s, report) in s_values.iter().zip(sparsity_sweep(scenario, s_values)?) {
                    reports.push((*s, scenario.n, report));
                }
            }
            let rows: Vec<_> = reports.iter().map(|(s, n, r)| (*s, *n, r)).collect();
            sparsity_csv(&rows)
        }
        None => {
            let mut reports = Vec::new();
            for scenario in &scenarios {
                info!("scenario: seed {} n {} p {}", scenario.seed, scenario.n, scenario.p);
                reports.push(run_scenario(scenario)?);
            }
            let rows: Vec<_> = scenarios.iter().zip(&reports).collect();
            coverage_csv(&rows)
        }
    };
    emit(args.out.as_deref(), &csv)
}

fn cmd_limitcheck(args: LimitArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).context("parsing limit-check JSON")?
        }
        None => LimitCheckConfig::default(),
    };
    if let Some(v) = args.signs {
        config.signs = v;
    }
    if let Some(v) = args.lambda0 {
        config.lambdas = v;
    }
    if let Some(v) = args.target {
        config.targets = v;
    }
    if let Some(v) = args.outer {
        config.outer = v;
    }
    if let Some(v) = args.inner {
        config.inner = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    info!(
        "limit check: seed {} lambda0 {:?} targets {:?} outer {} inner {}",
        config.seed, config.lambdas, config.targets, config.outer, config.inner
    );
    let rows = limit_check(&config)?;
    emit(args.out.as_deref(), &limit_check_csv(&rows))
}
