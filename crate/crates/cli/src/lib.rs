//! Library side of the `fairsize` command: config and CSV handling,
//! report rendering and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{CurveArgs, Overrides, TestArgs};
use error::CliResult;
use report::ReportDocument;

#[derive(Debug, Parser)]
#[command(name = "fairsize", version, about = "Plan and run statistically powered fairness audits")]
pub struct Cli {
    /// Emit the machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct DesignFlags {
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long = "u-tol", allow_hyphen_values = true)]
    pub u_tol: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Required sample size and group allocation.
    Design {
        config: PathBuf,
        #[command(flatten)]
        flags: DesignFlags,
    },
    /// Run the unfairness test on a `group,y_true,y_pred` CSV.
    Test {
        data: PathBuf,
        #[arg(long)]
        metric: String,
        #[arg(long = "privileged-group")]
        privileged_group: String,
        /// Group compared with the privileged one; needed with more than two groups.
        #[arg(long = "comparison-group")]
        comparison_group: Option<String>,
        #[arg(long = "u-tol", default_value_t = 0.0, allow_hyphen_values = true)]
        u_tol: f64,
        #[arg(long, default_value_t = commands::DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Monte Carlo rejection rate and variances for a scenario.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        flags: DesignFlags,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Power against total sample size, written as `n,power` CSV.
    Curve {
        config: PathBuf,
        #[arg(long = "n-min")]
        n_min: u64,
        #[arg(long = "n-max")]
        n_max: u64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        flags: DesignFlags,
    },
    /// Draw one synthetic audit dataset from a scenario.
    Generate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        flags: DesignFlags,
    },
}

impl DesignFlags {
    fn overrides(&self) -> Overrides {
        Overrides {
            metric: self.metric.clone(),
            alpha: self.alpha,
            beta: self.beta,
            u_tol: self.u_tol,
            tau: self.tau,
            ..Overrides::default()
        }
    }
}

pub fn execute(command: &Command) -> CliResult<ReportDocument> {
    match command {
        Command::Design { config, flags } => commands::cmd_design(config, &flags.overrides()),
        Command::Test {
            data,
            metric,
            privileged_group,
            comparison_group,
            u_tol,
            alpha,
        } => commands::cmd_test(&TestArgs {
            data,
            metric,
            u_tol: *u_tol,
            alpha: *alpha,
            privileged_group,
            comparison_group: comparison_group.as_deref(),
        }),
        Command::Simulate {
            config,
            flags,
            seed,
            replicates,
        } => commands::cmd_simulate(
            config,
            &Overrides {
                seed: *seed,
                replicates: *replicates,
                ..flags.overrides()
            },
        ),
        Command::Curve {
            config,
            n_min,
            n_max,
            steps,
            out,
            flags,
        } => commands::cmd_curve(
            &CurveArgs {
                config,
                n_min: *n_min,
                n_max: *n_max,
                steps: *steps,
                out,
            },
            &flags.overrides(),
        ),
        Command::Generate {
            config,
            out,
            seed,
            flags,
        } => commands::cmd_generate(
            config,
            &Overrides {
                seed: *seed,
                ..flags.overrides()
            },
            out,
        ),
    }
}
