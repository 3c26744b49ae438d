use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use impactlab_cli::analyze::{cmd_analyze, AnalyzeArgs};
use impactlab_cli::fit::{cmd_fit_risk, FitArgs};
use impactlab_cli::simulate::{cmd_simulate, SimulateArgs};
use impactlab_cli::sweep::{cmd_sweep, SweepArgs};
use impactlab_cli::CliResult;

/// Impact-coupled asset market: simulations, analysis and risk fits.
///
/// Exit status: 0 success, 2 usage or input error, 3 data integrity error.
#[derive(Debug, Parser)]
#[command(name = "impactlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a bot-only session and write its log (JSON lines).
    Simulate {
        /// Market config (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Roster (TOML, `[[agents]]` tables); buy-and-hold everywhere when omitted.
        #[arg(long)]
        roster: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run two sessions on the same noise path, written as `<out>.1` and `<out>.2`.
        #[arg(long)]
        pair: bool,
        /// Output log path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyze session logs and write report, table and plot-data files.
    Analyze {
        /// Log files, or directories of `*.jsonl` logs.
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Replicates of the synchronization null model.
        #[arg(long, default_value_t = 1000)]
        null_replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the risk-attitude model to lottery responses (CSV).
    FitRisk {
        /// Responses: `subject_id,scale,c1..c10`, 1 = risky option.
        responses: PathBuf,
        /// Lottery menu (TOML); the shipped menu when omitted.
        #[arg(long)]
        menu: Option<PathBuf>,
        /// Write the estimate as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Bootstrap replicates for the intervals; 0 skips them.
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        /// Keep subjects with more than one switch point.
        #[arg(long)]
        keep_inconsistent: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a parameter sweep described by a TOML spec.
    Sweep {
        /// Sweep spec (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also keep every run's log under `<out>/logs/<cell>/`.
        #[arg(long)]
        logs: bool,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { config, roster, seed, pair, out } => {
            let args = SimulateArgs { config: config.as_deref(), roster: roster.as_deref(), seed, pair, out: &out };
            for p in cmd_simulate(&args)? {
                println!("{}", p.display());
            }
        }
        Command::Analyze { logs, out, null_replicates, seed } => {
            for f in cmd_analyze(&AnalyzeArgs { logs: &logs, out: &out, null_replicates, seed })? {
                println!("{}", out.join(f).display());
            }
        }
        Command::FitRisk { responses, menu, out, replicates, keep_inconsistent, seed } => {
            let args = FitArgs {
                responses: &responses,
                menu: menu.as_deref(),
                out: out.as_deref(),
                replicates,
                keep_inconsistent,
                seed,
            };
            print!("{}", cmd_fit_risk(&args)?.1);
        }
        Command::Sweep { config, out, logs, threads } => {
            println!("{}", cmd_sweep(&SweepArgs { config: &config, out: &out, logs, threads })?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
