//! Acceptance criteria, one line each. Exits nonzero if any criterion fails.

use std::process::ExitCode;

use anyhow::{anyhow, ensure, Result};
use clfqp::controllers::{TickStatus, Variant};
use clfqp::sim::{compare, RunResult, SimConfig};
use clfqp_cli::check::{run_suite, Level, DEFAULT_SEED};
use clfqp_cli::config::{ConfigFile, SegmentSection};
use clfqp_cli::presets::preset;
use clfqp_cli::report::rate_degradation;
use clfqp_cli::telemetry::{write_csv, Dims};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Result<String> + 'a>);

struct PresetRuns {
    config: ConfigFile,
    cfgs: Vec<SimConfig<f64>>,
    results: Vec<RunResult<f64>>,
    csvs: Vec<Vec<u8>>,
}

fn run_preset(name: &str) -> Result<PresetRuns> {
    let config = preset(name)?;
    let cfgs = config.build_runs()?;
    let results = compare(&cfgs)?;
    let mut csvs = Vec::new();
    for (c, r) in cfgs.iter().zip(&results) {
        if let Some(e) = &r.failure {
            return Err(anyhow!("{name}/{}: run aborted: {e}", r.label));
        }
        let mut buf = Vec::new();
        write_csv(Dims::of(c.model.as_ref()), &r.rows, &mut buf)?;
        csvs.push(buf);
    }
    Ok(PresetRuns { config, cfgs, results, csvs })
}

fn suite(name: &str) -> Result<(String, f64)> {
    let r = run_suite(name, Level::Full, DEFAULT_SEED, None).ok_or_else(|| anyhow!("no suite named {name}"))?;
    ensure!(r.passed, "{}", r.detail);
    Ok((r.detail, r.seconds))
}

fn result<'a>(runs: &'a PresetRuns, label: &str) -> Result<&'a RunResult<f64>> {
    runs.results.iter().find(|r| r.label == label).ok_or_else(|| anyhow!("no run labelled {label}"))
}

fn care() -> Result<String> {
    let (detail, secs) = suite("care_residuals")?;
    ensure!(secs < 1.0, "took {secs:.2} s");
    Ok(format!("{detail} in {secs:.3} s"))
}

fn exponential_bound() -> Result<String> {
    Ok(suite("exponential_bound")?.0)
}

fn matches_fbl() -> Result<String> {
    Ok(suite("id_clf_qp_matches_fbl")?.0)
}

fn rate_ordering() -> Result<String> {
    Ok(suite("rate_ordering")?.0)
}

fn qp_oracle() -> Result<String> {
    let (detail, secs) = suite("qp_oracle")?;
    ensure!(secs < 30.0, "took {secs:.1} s");
    Ok(format!("{detail} in {secs:.1} s"))
}

fn planar_recovery(runs: &PresetRuns) -> Result<String> {
    let after = runs.config.sim.recovery_after;
    let peak = |v: Variant| -> Result<f64> { Ok(result(runs, v.name())?.peak_v_after(after)) };
    let (plus, id, clf) = (peak(Variant::IdClfQpPlus)?, peak(Variant::IdClfQp)?, peak(Variant::ClfQpDelta)?);
    ensure!(plus <= id && id <= clf, "recovery peaks plus {plus:.6e}, id {id:.6e}, clf-delta {clf:.6e} out of order");
    for (c, r) in runs.cfgs.iter().zip(&runs.results) {
        ensure!(r.summary.time_to_converge.is_some(), "{} never reached |eta| < 0.01", r.label);
        ensure!(r.summary.all_finite, "{} produced non-finite values", r.label);
        let limit = c.model.torque_limits().iter().fold(0.0_f64, |m, (lo, hi)| m.max(lo.abs()).max(hi.abs()));
        ensure!(r.summary.max_abs_u <= limit, "{}: |u| reached {}", r.label, r.summary.max_abs_u);
    }
    Ok(format!("peak V for t >= {after} s: id_clf_qp_plus {plus:.4e} <= id_clf_qp {id:.4e} <= clf_qp_delta {clf:.4e}; all converge"))
}

fn rate_degradation_gap(runs: &PresetRuns) -> Result<String> {
    let ratios = rate_degradation(&runs.cfgs, &runs.results, runs.config.sim.recovery_after);
    let ratio = |v: Variant| -> Result<f64> {
        ratios.iter().find(|r| r.0 == v.name()).map(|r| r.3).ok_or_else(|| anyhow!("no rate pair for {v}"))
    };
    let (clf, relaxed) = (ratio(Variant::ClfQpDelta)?, ratio(Variant::IdClfQpPlusRelaxed)?);
    let detail = format!(
        "peak V ratio 100 Hz / 1 kHz: clf_qp_delta {clf:.3}, id_clf_qp_plus_relaxed {relaxed:.3}, factor {:.3} (needs >= 1.5)",
        clf / relaxed
    );
    ensure!(clf >= 1.5 * relaxed, "{detail}");
    Ok(detail)
}

fn feasibility(all: &[&PresetRuns]) -> Result<String> {
    let mut optimal = 0;
    let (mut res, mut pyr, mut torque) = (0.0_f64, 0.0_f64, 0.0_f64);
    for runs in all {
        for r in &runs.results {
            for row in r.rows.iter().filter(|x| x.status == TickStatus::Optimal) {
                optimal += 1;
                res = res.max(row.dynamics_residual);
                pyr = pyr.max(row.pyramid_violation);
                torque = torque.max(row.torque_violation);
                ensure!(row.dynamics_residual < 1e-8, "{} t = {}: dynamics residual {:.3e}", r.label, row.t, row.dynamics_residual);
                ensure!(row.pyramid_violation <= 1e-8, "{} t = {}: pyramid violation {:.3e}", r.label, row.t, row.pyramid_violation);
                ensure!(row.torque_violation == 0.0, "{} t = {}: torque violation {:.3e}", r.label, row.t, row.torque_violation);
            }
        }
    }
    let (cone, _) = suite("pyramid_in_cone")?;
    Ok(format!("{optimal} optimal ticks: residual {res:.2e}, pyramid {pyr:.2e}, torque {torque:.1e}; {cone}"))
}

fn determinism(first: &[&PresetRuns], names: &[&str]) -> Result<String> {
    let mut files = 0;
    for (runs, name) in first.iter().zip(names) {
        let again = run_preset(name)?;
        ensure!(again.csvs.len() == runs.csvs.len(), "{name}: run count changed");
        for (k, (a, b)) in runs.csvs.iter().zip(&again.csvs).enumerate() {
            ensure!(a == b, "{name}/{}: CSV bytes differ between runs", runs.results[k].label);
            files += 1;
        }
    }
    Ok(format!("{files} CSVs across {} presets byte-identical on rerun", names.len()))
}

fn crouch_tracking(runs: &PresetRuns) -> Result<String> {
    let position = &runs.config.outputs.position;
    let k = position.iter().position(|o| o.label == "hip_z").ok_or_else(|| anyhow!("no hip_z output"))?;
    let levels: Vec<f64> = position[k]
        .segments
        .iter()
        .flatten()
        .flat_map(|s| match s {
            SegmentSection::Cosine(ft) => ft.to_vec(),
            SegmentSection::Power(c) | SegmentSection::Bezier(c) => c.clone(),
        })
        .collect();
    let amplitude = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max) - levels.iter().copied().fold(f64::INFINITY, f64::min);
    let r = &runs.results[0];
    ensure!(runs.cfgs[0].perturbation.is_none(), "crouch preset is not the nominal run");
    // With only position outputs, η = (y, ẏ) and the hip_z error sits at index k.
    let worst = r.rows.iter().map(|row| row.eta[k].abs()).fold(0.0, f64::max);
    let limit = 0.02 * amplitude;
    ensure!(worst < limit, "worst hip_z error {worst:.3e} m exceeds {limit:.3e} m");
    Ok(format!("worst hip_z error {:.3} mm against {:.1} mm (2% of {amplitude} m)", worst * 1e3, limit * 1e3))
}

fn main() -> ExitCode {
    let names = ["crouch_relaxed", "planar_fig3", "rate_fig5"];
    let loaded: Result<Vec<PresetRuns>> = names.iter().map(|n| run_preset(n)).collect();
    let runs = match loaded {
        Ok(r) => r,
        Err(e) => {
            eprintln!("acceptance: could not run the presets: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let (crouch, planar, rates) = (&runs[0], &runs[1], &runs[2]);
    let refs: Vec<&PresetRuns> = runs.iter().collect();

    let criteria: Vec<Criterion> = vec![
        ("CARE residuals", Box::new(care)),
        ("exponential bound of the scaled CLF", Box::new(exponential_bound)),
        ("ID-CLF-QP reproduces feedback linearization", Box::new(matches_fbl)),
        ("convergence incentive never slows the rate", Box::new(rate_ordering)),
        ("QP solver matches the enumeration oracle", Box::new(qp_oracle)),
        ("planar recovery ordering", Box::new(|| planar_recovery(planar))),
        ("rate-degradation gap", Box::new(|| rate_degradation_gap(rates))),
        ("constraint feasibility", Box::new(|| feasibility(&refs))),
        ("determinism", Box::new(|| determinism(&refs, &names))),
        ("crouch tracking", Box::new(|| crouch_tracking(crouch))),
    ];

    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", k + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {e:#}", k + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
