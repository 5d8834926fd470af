use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use clfqp_cli::check::{run_checks, Fault, Level, DEFAULT_SEED};
use clfqp_cli::commands::{self, RunOptions};
use clfqp_cli::config::ConfigFile;
use clfqp_cli::presets;

#[derive(Parser)]
#[command(name = "clfqp", version, about = "CLF-QP whole-body controllers on planar models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop simulation and write its telemetry CSV.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Telemetry CSV; the summary goes next to it as `<name>.summary.toml`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run every (variant, rate) pair of a config and write CSVs, a summary
    /// and a gnuplot script.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        outdir: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
    /// Run the invariant suites.
    Check {
        #[arg(long, value_enum, default_value = "quick")]
        level: LevelArg,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// List the bundled presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// TOML experiment file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Name of a bundled preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
}

impl Source {
    fn load(&self) -> Result<ConfigFile> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ConfigFile::load(path),
            (None, Some(name)) => presets::preset(name),
            (None, None) => bail!("either --config or --preset is required"),
        }
    }
}

#[derive(Args)]
struct RunFlags {
    /// Record wall-clock QP solve times (output is then not reproducible).
    #[arg(long)]
    record_timing: bool,
    /// Write the QP of the final control tick in plain text.
    #[arg(long)]
    dump_qp: Option<PathBuf>,
}

impl RunFlags {
    fn options(&self) -> RunOptions {
        RunOptions { record_timing: self.record_timing, dump_qp: self.dump_qp.clone() }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    FlipKp,
}

fn seed() -> Result<u64> {
    match std::env::var("CLFQP_SEED") {
        Ok(s) => s.trim().parse().with_context(|| format!("CLFQP_SEED: `{s}` is not an unsigned integer")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { source, out, run } => Ok(commands::simulate(&source.load()?, &out, &run.options())?.exit_code()),
        Command::Compare { source, outdir, run } => Ok(commands::compare(&source.load()?, &outdir, &run.options())?.exit_code()),
        Command::Check { level, inject_fault } => {
            let level = match level {
                LevelArg::Quick => Level::Quick,
                LevelArg::Full => Level::Full,
            };
            let fault = inject_fault.map(|FaultArg::FlipKp| Fault::FlipProportionalGain);
            let seed = seed()?;
            log::info!("check seed {seed}");
            let results = run_checks(level, seed, fault);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} of {} checks passed", results.len() - failed, results.len());
            Ok(u8::from(failed > 0))
        }
        Command::Presets { name: None } => {
            for (name, _) in presets::PRESETS {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Presets { name: Some(name) } => {
            print!("{}", presets::preset_text(&name)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
