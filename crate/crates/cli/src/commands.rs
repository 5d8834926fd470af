//! `simulate` and `compare`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clfqp::controllers::ControllerSession;
use clfqp::qp::write_dump;
use clfqp::sim::{compare as compare_runs, run, RunResult, SimConfig};

use crate::config::ConfigFile;
use crate::plot::comparison_script;
use crate::report;
use crate::telemetry::{write_csv, Dims};

/// How a command ended; maps onto the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Clean,
    /// Some ticks needed a fallback.
    Flagged,
    /// A run aborted; its partial telemetry was still written.
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Clean => 0,
            Outcome::Flagged => 2,
            Outcome::Failed => 1,
        }
    }

    fn of(res: &RunResult<f64>) -> Self {
        if res.failure.is_some() {
            Outcome::Failed
        } else if res.summary.flagged_ticks > 0 {
            Outcome::Flagged
        } else {
            Outcome::Clean
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record wall-clock solve times in `solve_us` (makes output
    /// nondeterministic).
    pub record_timing: bool,
    /// Write the QP of the final control tick to this file.
    pub dump_qp: Option<PathBuf>,
}

fn write_run_csv(cfg: &SimConfig<f64>, res: &RunResult<f64>, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(Dims::of(cfg.model.as_ref()), &res.rows, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

/// Summary path next to a CSV: `run.csv` → `run.summary.toml`.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.toml")
}

/// Rebuilds the QP solved at the last recorded tick of `res`.
fn dump_last_qp(cfg: &SimConfig<f64>, res: &RunResult<f64>, path: &Path) -> Result<()> {
    let Some(last) = res.rows.last() else {
        bail!("no control tick was recorded, so there is no QP to dump");
    };
    let mut session = ControllerSession::new(cfg.controller.clone())?;
    session.set_previous(res.rows.len().checked_sub(2).map(|k| res.rows[k].tick.clone()));
    session.tick(cfg.model.as_ref(), &cfg.outputs, &cfg.clf, &last.q, &last.qd, last.t)?;
    let Some(problem) = session.last_problem() else {
        bail!("variant {} computes its torque in closed form and solves no QP", cfg.controller.variant);
    };
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_dump(problem, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn simulate(config: &ConfigFile, out: &Path, opts: &RunOptions) -> Result<Outcome> {
    let mut runs = config.build_runs()?;
    if runs.len() > 1 {
        log::warn!(
            "config describes {} runs; simulate executes only the first ({}). Use compare for the full grid",
            runs.len(),
            runs[0].label
        );
    }
    let mut cfg = runs.swap_remove(0);
    cfg.record_timing = opts.record_timing;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let res = run(&cfg)?;
    write_run_csv(&cfg, &res, out)?;
    let summary = report::run_table(&cfg, &res, config.sim.recovery_after);
    fs::write(summary_path(out), &summary).with_context(|| format!("writing {}", summary_path(out).display()))?;
    if let Some(path) = &opts.dump_qp {
        dump_last_qp(&cfg, &res, path)?;
    }
    print!("{}", report::console_table(std::slice::from_ref(&cfg), std::slice::from_ref(&res), config.sim.recovery_after));
    if let Some(e) = &res.failure {
        log::error!("run aborted after {} ticks: {e}", res.rows.len());
    }
    Ok(Outcome::of(&res))
}

/// File names written by `compare`.
pub const COMPARISON_SUMMARY: &str = "summary.toml";
pub const PLOT_SCRIPT: &str = "plot.gp";

pub fn compare(config: &ConfigFile, outdir: &Path, opts: &RunOptions) -> Result<Outcome> {
    let mut cfgs = config.build_runs()?;
    for c in &mut cfgs {
        c.record_timing = opts.record_timing;
    }
    fs::create_dir_all(outdir).with_context(|| format!("creating {}", outdir.display()))?;
    let results = compare_runs(&cfgs)?;
    let mut files = Vec::new();
    for (c, r) in cfgs.iter().zip(&results) {
        let name = format!("{}.csv", r.label);
        write_run_csv(c, r, &outdir.join(&name))?;
        files.push((r.label.clone(), name));
        if let Some(e) = &r.failure {
            log::error!("{}: run aborted after {} ticks: {e}", r.label, r.rows.len());
        }
    }
    let recovery = config.sim.recovery_after;
    fs::write(outdir.join(COMPARISON_SUMMARY), report::comparison(&cfgs, &results, recovery))?;
    fs::write(outdir.join(PLOT_SCRIPT), comparison_script(Dims::of(cfgs[0].model.as_ref()), &files))?;
    if let Some(path) = &opts.dump_qp {
        dump_last_qp(&cfgs[0], &results[0], path)?;
    }
    print!("{}", report::console_table(&cfgs, &results, recovery));
    Ok(results.iter().map(Outcome::of).max().unwrap_or(Outcome::Clean))
}
