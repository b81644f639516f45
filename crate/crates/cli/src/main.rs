use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use parinv_cli::{exit_code, run, Command, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(
    name = "parinv",
    version,
    about = "Batch experiments for parabolic inverse problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Crank-Nicolson solve with trajectory, final field and boundary trace.
    ForwardParabolic(Common),
    /// Leapfrog wave solve with energy history.
    ForwardWave(Common),
    /// Transformed wave solution against the direct heat solution.
    BridgeCheck(Common),
    /// Source recovery from the full solution of the source problem.
    InvertSource(Common),
    /// Stability ratios over seeded random cases.
    StabilitySweep(Common),
    /// Stability ratios along interpolation paths between seeded cases.
    LipschitzSweep(Common),
    /// Carleman weight invariants and weighted-inequality ratios.
    CarlemanCheck(Common),
    /// Recovery of `q - p` from a final-time window.
    RecoverDelta(Common),
    /// Summary of every run directory below `--out`.
    Report(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; optional for `report`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Sub::ForwardParabolic(a) => (Command::ForwardParabolic, a),
        Sub::ForwardWave(a) => (Command::ForwardWave, a),
        Sub::BridgeCheck(a) => (Command::BridgeCheck, a),
        Sub::InvertSource(a) => (Command::InvertSource, a),
        Sub::StabilitySweep(a) => (Command::StabilitySweep, a),
        Sub::LipschitzSweep(a) => (Command::LipschitzSweep, a),
        Sub::CarlemanCheck(a) => (Command::CarlemanCheck, a),
        Sub::RecoverDelta(a) => (Command::RecoverDelta, a),
        Sub::Report(a) => (Command::Report, a),
    };
    let ov = Overrides {
        out: args.out,
        seed: args.seed,
        threads: args.threads,
    };
    let result = match (&args.config, command) {
        (Some(path), _) => match ExperimentConfig::load(path) {
            Ok(cfg) => run(command, cfg, &ov),
            Err(e) => {
                eprintln!("invalid config: {e}");
                return ExitCode::from(1);
            }
        },
        (None, Command::Report) => match &ov.out {
            Some(out) => parinv_cli::report(out),
            None => {
                eprintln!("report needs --config or --out");
                return ExitCode::from(1);
            }
        },
        (None, _) => {
            eprintln!("{} needs --config", command.name());
            return ExitCode::from(1);
        }
    };
    match result {
        Ok(m) => {
            for c in &m.checks {
                let v = c.value.map_or("nan".to_string(), |v| format!("{v:.3e}"));
                let status = if c.pass { "PASS" } else { "FAIL" };
                println!("{status} {} = {v} (threshold {:.3e})", c.name, c.threshold);
            }
            ExitCode::from(exit_code(&m) as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
