use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ltv_integral_cli::{commands, CliError, ExitStatus, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ltvint", version, about = "Integral action for linear time-varying state feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the configured scenario and write CSV traces, a summary and a plot.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated integral gains overriding `[controller] ki`.
        #[arg(long, value_delimiter = ',')]
        ki: Option<Vec<f64>>,
        /// Add a run of the proposed controller without anti-windup at the largest gain.
        #[arg(long)]
        no_antiwindup: bool,
        /// Also write the stability report.
        #[arg(long)]
        analysis: bool,
    },
    /// Check the stability conditions and estimate the BIBS gain.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Integral gain for the two-tank plant (first entry is used).
        #[arg(long, value_delimiter = ',')]
        ki: Option<Vec<f64>>,
    },
    /// Constant-gain design for a time-invariant plant and its eigenvalue check.
    Ti {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file; the bundled two-tank case study when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Seed of the random disturbance battery.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<ExitStatus, CliError> {
    let base = |c: Common| RunConfig {
        config_path: c.config,
        out: c.out,
        seed: c.seed,
        ..RunConfig::default()
    };
    match cli.command {
        Command::Simulate {
            common,
            ki,
            no_antiwindup,
            analysis,
        } => commands::cmd_simulate(&RunConfig {
            ki,
            no_antiwindup,
            analysis,
            ..base(common)
        }),
        Command::Analyze { common, ki } => commands::cmd_analyze(&RunConfig { ki, ..base(common) }),
        Command::Ti { common } => commands::cmd_ti(&base(common)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
