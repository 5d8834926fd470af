//! Invariant suites behind `clfqp check`.

use std::time::Instant;

use anyhow::{anyhow, ensure, Result};
use clfqp::controllers::{
    control_tick, friction_pyramid_rows, ControllerSpec, OutputReference, TickContext, Variant,
};
use clfqp::dynamics::{
    finite_diff_check, CartPole, CartPoleParams, ConstraintKind, ContactGeometry, CrouchingLeg, CrouchingLegParams,
    DoublePendulum, DoublePendulumParams, HolonomicConstraint, RobotModel,
};
use clfqp::linalg;
use clfqp::qp::{QpSolver, QpStatus};
use clfqp::resclf::{care_residual, OutputDynamics, ResClf};
use clfqp::sim::{rate_ordering, run};
use clfqp::verify::{enumerate_qp, random_qp};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::presets::preset;

/// Seed used when `CLFQP_SEED` is unset.
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

impl Level {
    fn pick(self, quick: usize, full: usize) -> usize {
        match self {
            Level::Quick => quick,
            Level::Full => full,
        }
    }
}

/// Deliberate defects for exercising the suites themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the proportional gain block of the controller's CLF.
    FlipProportionalGain,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<4} {:<22} {:>7.2}s  {}",
            if self.passed { "ok" } else { "FAIL" },
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Suite = fn(Level, &mut ChaCha8Rng, Option<Fault>) -> Result<String>;

pub const SUITES: [(&str, Suite); 7] = [
    ("care_residuals", care_residuals),
    ("exponential_bound", exponential_bound),
    ("finite_differences", finite_differences),
    ("id_clf_qp_matches_fbl", id_clf_qp_matches_fbl),
    ("rate_ordering", rate_ordering_suite),
    ("qp_oracle", qp_oracle),
    ("pyramid_in_cone", pyramid_in_cone),
];

/// Runs every suite; each gets its own generator derived from `seed`.
pub fn run_checks(level: Level, seed: u64, fault: Option<Fault>) -> Vec<CheckResult> {
    (0..SUITES.len()).map(|k| run_at(k, level, seed, fault)).collect()
}

/// Runs one suite by name with the generator `run_checks` would give it.
pub fn run_suite(name: &str, level: Level, seed: u64, fault: Option<Fault>) -> Option<CheckResult> {
    let k = SUITES.iter().position(|(n, _)| *n == name)?;
    Some(run_at(k, level, seed, fault))
}

fn run_at(k: usize, level: Level, seed: u64, fault: Option<Fault>) -> CheckResult {
    let (name, suite) = SUITES[k];
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    let start = Instant::now();
    let outcome = suite(level, &mut rng, fault);
    let seconds = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => CheckResult { name, passed: true, detail, seconds },
        Err(e) => CheckResult { name, passed: false, detail: format!("{e:#}"), seconds },
    }
}

fn random_spd_diagonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.1..10.0)))
}

fn care_residuals(level: Level, rng: &mut ChaCha8Rng, _: Option<Fault>) -> Result<String> {
    let extra = level.pick(5, 20);
    let mut worst: f64 = 0.0;
    let mut solves = 0;
    for m1 in 0..=3 {
        for m2 in 0..=3 {
            if m1 + m2 == 0 {
                continue;
            }
            let d = OutputDynamics::<f64>::new(m1, m2)?;
            let n = d.dim();
            let qs = std::iter::once(DMatrix::identity(n, n)).chain((0..extra).map(|_| random_spd_diagonal(rng, n)));
            for q in qs {
                let p = d.solve_care(&q)?.p;
                let r = care_residual(&d.f, &d.g, &q, &p);
                worst = worst.max(r);
                solves += 1;
                ensure!(r < 1e-8, "m = ({m1}, {m2}): residual {r:.3e}");
            }
        }
    }
    Ok(format!("{solves} solves, worst residual {worst:.2e}"))
}

fn exponential_bound(level: Level, rng: &mut ChaCha8Rng, _: Option<Fault>) -> Result<String> {
    let pairs: Vec<(usize, usize)> = match level {
        Level::Quick => vec![(0, 1), (1, 1), (0, 3), (2, 2)],
        Level::Full => (0..=3).flat_map(|a| (0..=3).map(move |b| (a, b))).filter(|&(a, b)| a + b > 0).collect(),
    };
    let mut samples = 0;
    for (m1, m2) in pairs {
        let d = OutputDynamics::<f64>::new(m1, m2)?;
        let n = d.dim();
        for eps in [1.0, 0.5, 0.25] {
            let clf = ResClf::new(d.clone(), DMatrix::identity(n, n), eps)?;
            let closed = &d.f - &d.g * d.g.transpose() * clf.p_eps() / eps;
            let eta0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let v0 = clf.value(&eta0);
            for k in 1..=100 {
                let t = 0.02 * k as f64;
                let v = clf.value(&((&closed * t).exp() * &eta0));
                let bound = v0 * (-clf.gamma() * t).exp() * (1.0 + 1e-6);
                samples += 1;
                ensure!(v <= bound, "m = ({m1}, {m2}), epsilon {eps}, t = {t}: V = {v:.6e} exceeds {bound:.6e}");
            }
        }
    }
    Ok(format!("{samples} samples within the bound"))
}

fn finite_differences(level: Level, rng: &mut ChaCha8Rng, _: Option<Fault>) -> Result<String> {
    let states = level.pick(20, 200);
    let models: Vec<Box<dyn RobotModel<f64>>> = vec![
        Box::new(CrouchingLeg::new(CrouchingLegParams::default())),
        Box::new(DoublePendulum::new(DoublePendulumParams { pinned_base: true, ..Default::default() })),
        Box::new(DoublePendulum::new(DoublePendulumParams::default())),
        Box::new(CartPole::new(CartPoleParams::default())),
    ];
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for model in &models {
        let q0 = model.default_configuration();
        for _ in 0..states {
            let n = model.n_q();
            let q = &q0 + DVector::from_fn(n, |_, _| rng.random_range(-0.3..0.3));
            let qd = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let (lo, _) = linalg::eigen_extremes(&model.mass_matrix(&q));
            ensure!(lo > 0.0, "{}: mass matrix not positive definite at {q:?}", model.name());
            if model.n_constraints() > 0 {
                let e = finite_diff_check(model.as_ref(), &q, &qd, h)?.max_error();
                worst = worst.max(e);
                ensure!(e < 1e-6, "{}: constraint terms differ from finite differences by {e:.3e}", model.name());
            }
            for name in model.task_names() {
                let task = |q: &DVector<f64>| model.task(name, q, &qd).expect("listed task");
                let k = task(&q);
                let mut jac_err: f64 = 0.0;
                for j in 0..n {
                    let mut qp = q.clone();
                    qp[j] += h;
                    let mut qm = q.clone();
                    qm[j] -= h;
                    jac_err = jac_err.max(((task(&qp).value - task(&qm).value) / (2.0 * h) - k.jacobian[j]).abs());
                }
                let jd = ((task(&(&q + &qd * h)).jacobian - task(&(&q - &qd * h)).jacobian) * &qd)[0] / (2.0 * h);
                let e = jac_err.max((jd - k.jdot_qdot).abs());
                worst = worst.max(e);
                ensure!(e < 1e-5, "{} task {name}: finite-difference mismatch {e:.3e}", model.name());
            }
        }
    }
    Ok(format!("{} models x {states} states, worst error {worst:.2e}", models.len()))
}

/// Scale of the CLF used by the feedback-linearization equivalence suite.
pub const MATCHING_EPSILON: f64 = 0.3;

/// Controller-side CLF, optionally carrying the injected fault.
fn controller_clf(pristine: &ResClf<f64>, fault: Option<Fault>) -> Result<ResClf<f64>> {
    match fault {
        None => Ok(pristine.clone()),
        Some(Fault::FlipProportionalGain) => {
            let d = pristine.dynamics().clone();
            let mut p = pristine.p().clone();
            for i in 0..d.m2 {
                for j in 0..d.m2 {
                    let (r, c) = (d.m1 + d.m2 + i, d.m1 + j);
                    p[(r, c)] = -p[(r, c)];
                    p[(c, r)] = -p[(c, r)];
                }
            }
            Ok(ResClf::from_care(d, p, pristine.q().clone(), pristine.epsilon())?)
        }
    }
}

fn id_clf_qp_matches_fbl(_: Level, rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<String> {
    let cfg = preset("planar_fig3")?;
    let model = cfg.build_model()?;
    let outputs = cfg.build_outputs(model.as_ref())?;
    let d = OutputDynamics::new(outputs.m1(), outputs.m2())?;
    let n = d.dim();
    let reference = ResClf::new(d, DMatrix::identity(n, n), MATCHING_EPSILON)?;
    let clf = controller_clf(&reference, fault)?;
    let eps = reference.epsilon();
    let gains = reference.gains();
    let mut spec = ControllerSpec::new(Variant::IdClfQp);
    spec.torque_limits = false;
    spec.sigma = 1e-10;
    spec.output_reference = OutputReference::Feedback;
    let mut worst: f64 = 0.0;
    let states = 100;
    for k in 0..states {
        let nq = model.n_q();
        let q = DVector::from_fn(nq, |_, _| rng.random_range(-1.5..1.5));
        let qd = DVector::from_fn(nq, |_, _| rng.random_range(-2.0..2.0));
        let t = rng.random_range(0.0..1.5);
        let tick = control_tick(&spec, model.as_ref(), &outputs, &clf, &q, &qd, t, None)?;
        ensure!(tick.qp_status == Some(QpStatus::Optimal), "state {k}: QP status {:?}", tick.qp_status);
        let ctx = TickContext::new(model.as_ref(), &outputs, &reference, &q, &qd, t)?;
        let e = &ctx.outputs;
        // Scaled PD law from the gain blocks: −K_v y₁/ε − K_P y₂/ε² − K_D ẏ₂/ε.
        let mut v_fbl = DVector::zeros(outputs.m());
        if outputs.m1() > 0 {
            v_fbl.rows_mut(0, outputs.m1()).copy_from(&(-(&gains.velocity * &e.y1) / eps));
        }
        if outputs.m2() > 0 {
            let v2 = -(&gains.proportional * &e.y2) / (eps * eps) - (&gains.derivative * &e.y2_dot) / eps;
            v_fbl.rows_mut(outputs.m1(), outputs.m2()).copy_from(&v2);
        }
        let err = (ctx.output_accel(&tick.qdd) - &v_fbl).amax();
        worst = worst.max(err);
        ensure!(err < 1e-6, "state {k}: output acceleration differs from the scaled PD law by {err:.3e}");
    }
    Ok(format!("{states} states, worst deviation {worst:.2e}"))
}

/// Perturbed crouch under ID-CLF-QP+ with ID-CLF-QP re-solved on each state.
fn rate_ordering_suite(level: Level, _: &mut ChaCha8Rng, _: Option<Fault>) -> Result<String> {
    let mut cfg = preset("rate_fig5")?;
    cfg.controller.variant = crate::config::OneOrMany::One(Variant::IdClfQpPlus.name().into());
    cfg.controller.shadow = Some(crate::config::VariantName(Variant::IdClfQp));
    cfg.sim.control_rate_hz = crate::config::OneOrMany::One(1000.0);
    cfg.sim.perturbation = Some(crate::config::PerturbationSection {
        q: Some(vec![0.0, 0.0, 0.1, 0.05, -0.05, 0.0]),
        qd: None,
    });
    let ticks = level.pick(300, 2000);
    cfg.sim.duration = ticks as f64 * 1e-3;
    let sim = cfg.build_runs()?.swap_remove(0);
    let res = run(&sim)?;
    if let Some(e) = res.failure {
        return Err(anyhow!("run aborted: {e}"));
    }
    let o = rate_ordering(&res.rows, crate::report::RATE_ORDERING_TOLERANCE);
    ensure!(o.mutually_optimal > 0, "no mutually optimal ticks");
    ensure!(
        o.holds(),
        "{} of {} mutually optimal ticks slower than the shadow, worst margin {:.3e}",
        o.violations,
        o.mutually_optimal,
        o.worst_margin
    );
    Ok(format!("{} ticks, {} mutually optimal, worst margin {:.2e}", o.ticks, o.mutually_optimal, o.worst_margin))
}

fn qp_oracle(level: Level, rng: &mut ChaCha8Rng, _: Option<Fault>) -> Result<String> {
    let count = level.pick(100, 500);
    let mut worst: f64 = 0.0;
    let mut solver = QpSolver::new();
    for k in 0..count {
        let n = rng.random_range(1..=30);
        let m_in = rng.random_range(0..=20);
        let m_eq = rng.random_range(0..=10);
        let p = random_qp(rng, n, m_in, m_eq);
        let (_, best) = enumerate_qp(&p).ok_or_else(|| anyhow!("problem {k}: oracle found no feasible point"))?;
        let s = solver.solve(&p, None)?;
        ensure!(s.status == QpStatus::Optimal, "problem {k}: solver status {}", s.status.as_str());
        let gap = (s.objective - best).abs() / (1.0 + best.abs());
        worst = worst.max(gap);
        ensure!(gap < 1e-8, "problem {k} (n = {n}): objective {} vs oracle {best}", s.objective);
    }
    Ok(format!("{count} problems, worst relative gap {worst:.2e}"))
}

fn pyramid_in_cone(level: Level, rng: &mut ChaCha8Rng, _: Option<Fault>) -> Result<String> {
    let samples = level.pick(100_000, 1_000_000);
    let mu = 0.7;
    let patch = HolonomicConstraint {
        label: "patch".into(),
        dim: 3,
        kind: ConstraintKind::Contact,
        contact: Some(ContactGeometry {
            normal: 2,
            tangent_x: Some(0),
            tangent_y: Some(1),
            moment_length: None,
            moment_width: None,
            mu,
            length: 0.2,
            width: 0.1,
        }),
    };
    let rows = friction_pyramid_rows(&patch, true, false)?;
    let mut inside = 0;
    for _ in 0..samples {
        let l: DVector<f64> = DVector::from_vec(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)]);
        if (&rows * &l).max() <= 0.0 {
            inside += 1;
            let tangential = (l[0] * l[0] + l[1] * l[1]).sqrt();
            ensure!(tangential <= mu * l[2] * (1.0 + 1e-12), "pyramid point {l:?} lies outside the cone");
        }
    }
    ensure!(inside > 0, "no sample fell inside the pyramid");
    Ok(format!("{samples} wrenches, {inside} inside the pyramid, all inside the cone"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fault_free_clf_is_untouched() {
        let d = OutputDynamics::<f64>::new(1, 2).unwrap();
        let c = ResClf::new(d, DMatrix::identity(5, 5), 0.5).unwrap();
        assert_eq!(controller_clf(&c, None).unwrap().p(), c.p());
    }

    #[test]
    fn flipped_gain_negates_only_the_proportional_block() {
        let d = OutputDynamics::<f64>::new(1, 2).unwrap();
        let c = ResClf::new(d, DMatrix::identity(5, 5), 0.5).unwrap();
        let f = controller_clf(&c, Some(Fault::FlipProportionalGain)).unwrap();
        let (g, h) = (c.gains(), f.gains());
        assert_eq!(h.proportional, -g.proportional);
        assert_eq!(h.derivative, g.derivative);
        assert_eq!(h.velocity, g.velocity);
    }
}
