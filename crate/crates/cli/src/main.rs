use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use urbandrive_cli::{cmd_fan, cmd_run, cmd_suite, exit_code, FanMode, FanStart};

#[derive(Parser)]
#[command(name = "urbandrive", version, about = "Frenet lattice planner in a closed-loop driving simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; writes metrics.json and trajectory.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// TOML run config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit every candidate profile of a lateral or velocity fan as CSV.
    Fan {
        #[arg(long, value_enum)]
        mode: FanMode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Start offset (lateral) or start speed (velocity).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        start: f64,
        /// Start lateral speed (lateral) or acceleration (velocity).
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        start_rate: f64,
        /// Desired speed of the velocity fan.
        #[arg(long, default_value_t = 10.0)]
        target_speed: f64,
    },
    /// Run every route of a JSON manifest and write an aggregate table.
    Suite {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            config,
            seed,
            out,
        } => cmd_run(&scenario, config.as_deref(), seed, &out).map(|r| {
            println!(
                "termination={:?} driving_score={:.3} route_completion={:.3} infraction_penalty={:.3}",
                r.termination, r.driving_score, r.route_completion, r.infraction_penalty
            );
            exit_code(r.termination)
        }),
        Command::Fan {
            mode,
            config,
            out,
            start,
            start_rate,
            target_speed,
        } => {
            let start = FanStart {
                value: start,
                rate: start_rate,
                target_speed,
            };
            cmd_fan(mode, start, config.as_deref(), &out).map(|n| {
                println!("candidates={n}");
                0
            })
        }
        Command::Suite { manifest, out } => cmd_suite(&manifest, &out).map(|agg| {
            println!(
                "routes={} driving_score={:.3} route_completion={:.3}",
                agg.routes, agg.driving_score, agg.route_completion
            );
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
