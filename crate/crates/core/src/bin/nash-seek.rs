use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nash_seek::cli::{self, PaperOptions, RunOptions, EXIT_ASSUMPTION, EXIT_NUMERICAL, EXIT_OK};

/// Distributed Nash equilibrium seeking with saturated high-order players.
///
/// Exit status: 0 success, 2 configuration error, 3 assumption failure,
/// 4 numerical fault.
#[derive(Parser)]
#[command(name = "nash-seek", version)]
struct Cli {
    /// Output directory for trajectory.csv and summary.json.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Accept theta in [1/2, 1).
    #[arg(long, global = true)]
    allow_large_theta: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario file.
    Run {
        config: PathBuf,
        /// Run this many randomized replicates instead.
        #[arg(long, default_value_t = 0)]
        replicates: u64,
    },
    /// Reproduce the six-player example and its unsaturated comparison.
    PaperExample {
        /// Simulation horizon in seconds.
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Solve the configured game in closed form and by gradient play.
    SolveNe { config: PathBuf },
    /// Check assumptions and design conditions without simulating.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let mut out = io::stdout().lock();
    let result = match &args.command {
        Command::Run { config, replicates } => {
            let opts = RunOptions {
                allow_large_theta: args.allow_large_theta,
                replicates: *replicates,
                jobs: args.jobs,
            };
            cli::cmd_run(config, &args.out, &opts, &mut out).map(|_| EXIT_OK)
        }
        Command::PaperExample { t_end } => {
            let opts = PaperOptions {
                t_end: *t_end,
                jobs: args.jobs,
            };
            cli::cmd_paper_example(&args.out, &opts, &mut out).map(|_| EXIT_OK)
        }
        Command::SolveNe { config } => cli::cmd_solve_ne(config, &mut out).map(|dev| {
            if dev < 1e-6 {
                EXIT_OK
            } else {
                EXIT_NUMERICAL
            }
        }),
        Command::Check { config } => cli::cmd_check(config, args.allow_large_theta, &mut out)
            .map(|ok| if ok { EXIT_OK } else { EXIT_ASSUMPTION }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
