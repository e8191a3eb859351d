use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use owc_cli::{
    cmd_oracle_check, cmd_pareto, cmd_power_sweep, cmd_run, exit_code, init_threads, parse_list, parse_modes,
    parse_range, Common, Target, EXIT_CONFIG,
};

/// Cell-free optical wireless network optimizer with a reflecting surface.
#[derive(Parser)]
#[command(name = "owc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Scenario file (TOML).
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `solver.rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TargetArg {
    /// Sum-rate target, bits/s/Hz.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sum-rate target as a fraction of the estimated ceiling, in (0, 1].
    #[arg(long)]
    alpha: Option<f64>,
}

impl TargetArg {
    fn target(&self) -> Target {
        match (self.epsilon, self.alpha) {
            (Some(e), _) => Target::Epsilon(e),
            (_, Some(a)) => Target::Alpha(a),
            _ => unreachable!("clap enforces one of the two"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Single solve; writes solution.csv, trace.csv, manifest.txt.
    Run {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        target: TargetArg,
    },
    /// ε-sweep; writes pareto.csv.
    Pareto {
        #[command(flatten)]
        shared: Shared,
        /// Comma list or start:stop:step.
        #[arg(long, default_value = "0.15:1.0:0.05")]
        alphas: String,
        /// Comma list of baseline modes, or `all`.
        #[arg(long, default_value = "")]
        baselines: String,
    },
    /// EE against average LED power; writes power_sweep.csv.
    PowerSweep {
        #[command(flatten)]
        shared: Shared,
        /// start:stop:step in dBm.
        #[arg(long, default_value = "25:35:1")]
        pth_dbm: String,
        #[arg(long, default_value_t = 0.6)]
        alpha: f64,
        #[arg(long, default_value = "")]
        baselines: String,
    },
    /// Exhaustive cross-check on a small instance; writes oracle_check.csv.
    OracleCheck {
        #[command(flatten)]
        shared: Shared,
        /// Grid file (TOML: power_levels, angle_levels, placement_points).
        #[arg(long)]
        grids: PathBuf,
        #[arg(long, conflicts_with = "alpha")]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
    },
}

fn common(shared: &Shared) -> Common {
    Common {
        config: shared.config.clone(),
        out: shared.out.clone(),
        seed: shared.seed,
        command_line: std::env::args().collect::<Vec<_>>().join(" "),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Run { shared, target } => cmd_run(&common(shared), target.target()),
        Command::Pareto {
            shared,
            alphas,
            baselines,
        } => cmd_pareto(&common(shared), &parse_list(alphas)?, &parse_modes(baselines)?),
        Command::PowerSweep {
            shared,
            pth_dbm,
            alpha,
            baselines,
        } => cmd_power_sweep(&common(shared), &parse_range(pth_dbm)?, *alpha, &parse_modes(baselines)?),
        Command::OracleCheck {
            shared,
            grids,
            epsilon,
            alpha,
        } => {
            let target = epsilon.map_or(Target::Alpha(*alpha), Target::Epsilon);
            cmd_oracle_check(&common(shared), grids, target)
        }
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("owc: {e}");
            ExitCode::from(exit_code(&e).max(EXIT_CONFIG))
        }
    }
}
