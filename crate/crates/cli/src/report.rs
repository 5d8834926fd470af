//! Run summaries as TOML documents, plus a console table.

use std::fmt::Write as _;

use clfqp::sim::{rate_ordering, RunResult, SimConfig, CONVERGENCE_TOLERANCE};

use crate::config::fmt_rate;
use crate::telemetry::format_float;

/// Tolerance of the paired instantaneous-rate check.
pub const RATE_ORDERING_TOLERANCE: f64 = 1e-9;

fn float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format_float(x)
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Summary of one run as a TOML table named `runs.<label>`.
pub fn run_table(cfg: &SimConfig<f64>, res: &RunResult<f64>, recovery_after: f64) -> String {
    let s = &res.summary;
    let mut out = String::new();
    let _ = writeln!(out, "[runs.{}]", quote(&res.label));
    let _ = writeln!(out, "variant = {}", quote(cfg.controller.variant.name()));
    let _ = writeln!(out, "control_rate_hz = {}", float(1.0 / cfg.control_period));
    let _ = writeln!(out, "ticks = {}", s.ticks);
    let _ = writeln!(out, "completed = {}", res.failure.is_none());
    if let Some(e) = &res.failure {
        let _ = writeln!(out, "failure = {}", quote(&e.to_string()));
    }
    let _ = writeln!(out, "peak_v = {}", float(s.peak_v));
    let _ = writeln!(out, "recovery_after = {}", float(recovery_after));
    let _ = writeln!(out, "peak_v_recovery = {}", float(res.peak_v_after(recovery_after)));
    let _ = writeln!(out, "converged = {}", s.time_to_converge.is_some());
    if let Some(t) = s.time_to_converge {
        let _ = writeln!(out, "time_to_converge = {}", float(t));
    }
    let _ = writeln!(out, "convergence_tolerance = {}", float(CONVERGENCE_TOLERANCE));
    let _ = writeln!(out, "final_eta_norm = {}", float(s.final_eta_norm));
    let _ = writeln!(out, "control_effort = {}", float(s.control_effort));
    let _ = writeln!(out, "flagged_ticks = {}", s.flagged_ticks);
    let _ = writeln!(out, "max_dynamics_residual = {}", float(s.max_dynamics_residual));
    let _ = writeln!(out, "max_pyramid_violation = {}", float(s.max_pyramid_violation));
    let _ = writeln!(out, "max_torque_violation = {}", float(s.max_torque_violation));
    let _ = writeln!(out, "max_holonomic_velocity = {}", float(s.max_holonomic_velocity));
    let _ = writeln!(out, "max_abs_u = {}", float(s.max_abs_u));
    let _ = writeln!(out, "all_finite = {}", s.all_finite);
    if cfg.shadow.is_some() {
        let o = rate_ordering(&res.rows, RATE_ORDERING_TOLERANCE);
        let _ = writeln!(out, "\n[runs.{}.rate_ordering]", quote(&res.label));
        let _ = writeln!(out, "shadow = {}", quote(cfg.shadow.as_ref().map_or("", |s| s.variant.name())));
        let _ = writeln!(out, "tolerance = {}", float(RATE_ORDERING_TOLERANCE));
        let _ = writeln!(out, "mutually_optimal = {}", o.mutually_optimal);
        let _ = writeln!(out, "violations = {}", o.violations);
        let _ = writeln!(out, "worst_margin = {}", float(o.worst_margin));
    }
    out
}

/// Peak recovery V at the lowest rate over that at the highest, per variant
/// run at more than one rate.
pub fn rate_degradation(cfgs: &[SimConfig<f64>], results: &[RunResult<f64>], recovery_after: f64) -> Vec<(String, f64, f64, f64)> {
    let mut variants: Vec<&str> = cfgs.iter().map(|c| c.controller.variant.name()).collect();
    variants.dedup();
    let mut out = Vec::new();
    for v in variants {
        let runs: Vec<(f64, f64)> = cfgs
            .iter()
            .zip(results)
            .filter(|(c, _)| c.controller.variant.name() == v)
            .map(|(c, r)| (1.0 / c.control_period, r.peak_v_after(recovery_after)))
            .collect();
        if runs.len() < 2 {
            continue;
        }
        let lo = runs.iter().copied().fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
        let hi = runs.iter().copied().fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
        out.push((v.to_string(), lo.0, hi.0, lo.1 / hi.1));
    }
    out
}

/// Full comparison summary: one table per run and the rate-degradation
/// ratios.
pub fn comparison(cfgs: &[SimConfig<f64>], results: &[RunResult<f64>], recovery_after: f64) -> String {
    let mut out = String::new();
    for (c, r) in cfgs.iter().zip(results) {
        out.push_str(&run_table(c, r, recovery_after));
        out.push('\n');
    }
    for (v, lo, hi, ratio) in rate_degradation(cfgs, results, recovery_after) {
        let _ = writeln!(out, "[rate_degradation.{}]", quote(&v));
        let _ = writeln!(out, "low_rate_hz = {}", float(lo));
        let _ = writeln!(out, "high_rate_hz = {}", float(hi));
        let _ = writeln!(out, "peak_v_ratio = {}\n", float(ratio));
    }
    out
}

/// Fixed-width console table.
pub fn console_table(cfgs: &[SimConfig<f64>], results: &[RunResult<f64>], recovery_after: f64) -> String {
    let mut out = format!(
        "{:<34} {:>8} {:>7} {:>11} {:>11} {:>9} {:>11} {:>7}\n",
        "run", "rate_hz", "ticks", "peak_V", "peak_V_rec", "t_conv", "effort", "flagged"
    );
    for (c, r) in cfgs.iter().zip(results) {
        let s = &r.summary;
        let conv = s.time_to_converge.map_or("-".to_string(), |t| format!("{t:.3}"));
        let _ = writeln!(
            out,
            "{:<34} {:>8} {:>7} {:>11.4e} {:>11.4e} {:>9} {:>11.4e} {:>7}{}",
            r.label,
            fmt_rate(1.0 / c.control_period),
            s.ticks,
            s.peak_v,
            r.peak_v_after(recovery_after),
            conv,
            s.control_effort,
            s.flagged_ticks,
            if r.failure.is_some() { "  (aborted)" } else { "" }
        );
    }
    out
}
