//! `dpicl`: command-line front end for the LDP and GDP demonstration pipelines.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 backend error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dpicl", version, about = "Differentially private demonstrations for in-context learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset description (TOML).
    #[arg(long)]
    pub dataset_config: PathBuf,
    /// Headered CSV: features then label.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct BackendArgs {
    /// Completion endpoint URL.
    #[arg(long, env = "DPICL_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "DPICL_MODEL")]
    pub model: Option<String>,
    #[arg(long, env = "DPICL_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// Mock mode: echo-majority, oracle or fixed:<text>.
    #[arg(long, conflicts_with = "endpoint")]
    pub mock: Option<String>,
    /// Allow requests to a live endpoint.
    #[arg(long)]
    pub live: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Binarize and apply randomized response; writes a CSV and a `.meta.json` sidecar.
    Perturb {
        #[command(flatten)]
        data: DataArgs,
        /// Total budget, split evenly over features and label.
        #[arg(long)]
        epsilon: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the joint distribution from a perturbed CSV.
    Reconstruct {
        /// Perturbed CSV written by `perturb`.
        #[arg(long)]
        perturbed: PathBuf,
        /// Probability table (CSV); stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample k demonstrations from the reconstructed distribution.
    DemosLdp {
        #[arg(long)]
        perturbed: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build k aggregate demonstrations under global DP.
    DemosGdp {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        epsilon: String,
        #[arg(long)]
        k: usize,
        /// Poisson subsample target.
        #[arg(long)]
        n_target: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the privacy ledger to stderr.
        #[arg(long)]
        ledger: bool,
    },
    /// Render the prompt for one data row.
    Render {
        #[command(flatten)]
        data: DataArgs,
        /// 0-based data row.
        #[arg(long)]
        row: usize,
        /// Template id: gdp or ldp.
        #[arg(long, default_value = "gdp")]
        template: String,
        /// Demonstrations text to prepend.
        #[arg(long)]
        demos: Option<PathBuf>,
    },
    /// Run an experiment grid.
    Run {
        /// Experiment file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for trials.csv and summary.txt.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Keep finished cells from a previous interrupted run.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated budgets, e.g. `1,5,inf`.
        #[arg(long)]
        epsilons: Option<String>,
        /// Comma-separated k values.
        #[arg(long)]
        ks: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Print the mean ± std table for a trials CSV.
    Report {
        trials: PathBuf,
    },
    /// Amplified budget under Poisson subsampling at rate n/N.
    Amplify {
        #[arg(long)]
        epsilon: String,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        population: u64,
    },
    /// Two-tailed paired t-test of two comma-separated series.
    Ttest {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
