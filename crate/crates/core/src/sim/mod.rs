//! Fixed-step closed-loop simulation: RK4 on the constrained dynamics with
//! zero-order hold between control ticks.

mod rates;

pub use rates::{rate_ordering, RateOrdering};

use std::sync::Arc;

use nalgebra::DVector;

use crate::controllers::{contact_rows, ControlTick, ControllerSession, ControllerSpec, TickContext, TickStatus};
use crate::dynamics::{constraint_stack, constraint_values, eval_dynamics, forward_dynamics, project_to_constraints, RobotModel};
use crate::linalg;
use crate::outputs::OutputSet;
use crate::qp::QpStatus;
use crate::resclf::ResClf;
use crate::{Error, Real, Result};

/// Constraint stabilization `J q̈ + J̇ q̇ + 2α J q̇ + β² (h(q) − h₀) = 0`.
#[derive(Debug, Clone)]
pub struct Stabilization<T: Real> {
    pub alpha: T,
    pub beta: T,
    pub target: DVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct State<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
}

/// Generalized accelerations and constraint forces at `state` under `u`.
pub fn accelerations<T: Real>(
    model: &dyn RobotModel<T>,
    state: &State<T>,
    u: &DVector<T>,
    stab: Option<&Stabilization<T>>,
) -> Result<(DVector<T>, DVector<T>)> {
    let terms = eval_dynamics(model, &state.q, &state.qd)?;
    let extra = match stab {
        Some(s) if terms.jacobian.nrows() > 0 => {
            let h = constraint_values(model, &state.q);
            Some(&terms.jacobian * &state.qd * (T::lit(2.0) * s.alpha) + (h - &s.target) * (s.beta * s.beta))
        }
        _ => None,
    };
    forward_dynamics(&terms, u, extra.as_ref())
}

/// One RK4 step with `u` held constant; `λ` is recomputed at every stage.
pub fn step<T: Real>(
    model: &dyn RobotModel<T>,
    state: &State<T>,
    u: &DVector<T>,
    stab: Option<&Stabilization<T>>,
    dt: T,
) -> Result<State<T>> {
    if !(dt > T::zero()) {
        return Err(Error::arg("integration step must be positive"));
    }
    let deriv = |s: &State<T>| -> Result<(DVector<T>, DVector<T>)> {
        let (qdd, _) = accelerations(model, s, u, stab)?;
        Ok((s.qd.clone(), qdd))
    };
    let shifted = |k: &(DVector<T>, DVector<T>), h: T| State {
        q: &state.q + &k.0 * h,
        qd: &state.qd + &k.1 * h,
    };
    let half = dt * T::lit(0.5);
    let k1 = deriv(state)?;
    let k2 = deriv(&shifted(&k1, half))?;
    let k3 = deriv(&shifted(&k2, half))?;
    let k4 = deriv(&shifted(&k3, dt))?;
    let two = T::lit(2.0);
    let w = dt / T::lit(6.0);
    Ok(State {
        q: &state.q + (&k1.0 + &k2.0 * two + &k3.0 * two + &k4.0) * w,
        qd: &state.qd + (&k1.1 + &k2.1 * two + &k3.1 * two + &k4.1) * w,
    })
}

/// Additive offset applied to the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation<T: Real> {
    pub q: DVector<T>,
    pub qd: DVector<T>,
}

#[derive(Clone)]
pub struct SimConfig<T: Real> {
    /// Label used in reports and file names.
    pub label: String,
    pub model: Arc<dyn RobotModel<T>>,
    pub outputs: Arc<OutputSet<T>>,
    pub clf: Arc<ResClf<T>>,
    pub controller: ControllerSpec<T>,
    /// Integrator step (s).
    pub dt: T,
    /// Control period (s); an integer multiple of `dt`.
    pub control_period: T,
    pub duration: T,
    pub initial_q: DVector<T>,
    pub initial_qd: DVector<T>,
    pub perturbation: Option<Perturbation<T>>,
    /// Baumgarte gains `(α, β)`; off by default.
    pub baumgarte: Option<(T, T)>,
    /// Record wall-clock solve times; off keeps telemetry reproducible.
    pub record_timing: bool,
    /// Also solve each tick cold to compare iteration counts.
    pub cold_shadow: bool,
    /// Second controller solved on the same states for paired comparisons.
    pub shadow: Option<ControllerSpec<T>>,
}

impl<T: Real> SimConfig<T> {
    pub fn new(
        label: impl Into<String>,
        model: Arc<dyn RobotModel<T>>,
        outputs: Arc<OutputSet<T>>,
        clf: Arc<ResClf<T>>,
        controller: ControllerSpec<T>,
    ) -> Self {
        let n = model.n_q();
        SimConfig {
            label: label.into(),
            initial_q: model.default_configuration(),
            initial_qd: DVector::zeros(n),
            model,
            outputs,
            clf,
            controller,
            dt: T::lit(1e-4),
            control_period: T::lit(1e-3),
            duration: T::one(),
            perturbation: None,
            baumgarte: None,
            record_timing: false,
            cold_shadow: false,
            shadow: None,
        }
    }

    /// Physics steps per control tick.
    pub fn steps_per_tick(&self) -> Result<usize> {
        let ratio = (self.control_period / self.dt).as_f64();
        let k = ratio.round();
        if !(k >= 1.0) || (ratio - k).abs() > 1e-9 * k {
            return Err(Error::Config(format!(
                "sim: control period {} s is not an integer multiple of dt {} s",
                self.control_period.as_f64(),
                self.dt.as_f64()
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::Config("sim.dt: must be positive".into()));
        }
        if !(self.duration > T::zero()) {
            return Err(Error::Config("sim.duration: must be positive".into()));
        }
        self.steps_per_tick()?;
        let n = self.model.n_q();
        if self.initial_q.len() != n || self.initial_qd.len() != n {
            return Err(Error::Config(format!("sim.initial_q / initial_qd: expected {n} entries")));
        }
        if let Some(p) = &self.perturbation {
            if p.q.len() != n || p.qd.len() != n {
                return Err(Error::Config(format!("sim.perturbation: expected {n} entries for q and qd")));
            }
        }
        self.controller.validate()
    }
}

/// Shadow controller result on the primary run's state.
#[derive(Debug, Clone)]
pub struct ShadowSample<T: Real> {
    pub status: TickStatus,
    pub qp_status: Option<QpStatus>,
    pub vdot: T,
    pub gamma_inst: T,
}

/// One row per control tick.
#[derive(Debug, Clone)]
pub struct TelemetryRow<T: Real> {
    pub t: T,
    pub q: DVector<T>,
    pub qd: DVector<T>,
    pub u: DVector<T>,
    /// Constraint forces of the physical system under `u`.
    pub lambda: DVector<T>,
    pub v: T,
    /// `L_F V + L_G V (J_y q̈ + J̇_y q̇)` at the physical accelerations.
    pub vdot_analytic: T,
    /// Centered difference of `V` across neighbouring ticks.
    pub vdot_fd: T,
    pub gamma_inst: T,
    pub delta: T,
    pub eta: DVector<T>,
    pub eta_norm: T,
    pub status: TickStatus,
    pub active_set: usize,
    pub solve_us: u64,
    /// The controller's own tick record.
    pub tick: ControlTick<T>,
    /// `‖D q̈ + H − B u − Jᵀλ‖_∞` at the controller's solution.
    pub dynamics_residual: T,
    /// Largest pyramid/rollover row value at the controller's `λ`.
    pub pyramid_violation: T,
    /// Largest torque-limit excess of the applied `u`.
    pub torque_violation: T,
    /// `‖J q̇‖_∞`.
    pub holonomic_velocity: T,
    pub shadow: Option<ShadowSample<T>>,
}

#[derive(Debug, Clone)]
pub struct RunSummary<T: Real> {
    pub ticks: usize,
    pub peak_v: T,
    /// First tick time with `‖η‖ < 0.01`.
    pub time_to_converge: Option<T>,
    pub final_eta_norm: T,
    /// `∫‖u‖² dt`.
    pub control_effort: T,
    pub flagged_ticks: usize,
    pub max_dynamics_residual: T,
    pub max_pyramid_violation: T,
    pub max_torque_violation: T,
    pub max_holonomic_velocity: T,
    pub max_abs_u: T,
    pub all_finite: bool,
}

pub const CONVERGENCE_TOLERANCE: f64 = 0.01;

pub struct RunResult<T: Real> {
    pub label: String,
    pub rows: Vec<TelemetryRow<T>>,
    pub summary: RunSummary<T>,
    /// Error that aborted the run; rows up to that point are kept.
    pub failure: Option<Error>,
}

impl<T: Real> RunResult<T> {
    /// Largest `V` at ticks with `t ≥ from`.
    pub fn peak_v_after(&self, from: T) -> T {
        self.rows
            .iter()
            .filter(|r| r.t >= from)
            .fold(T::zero(), |m, r| m.max(r.v))
    }
}

/// Closed-loop run. Tick and integration errors end the run early and are
/// reported in [`RunResult::failure`]; configuration errors are returned.
pub fn run<T: Real>(cfg: &SimConfig<T>) -> Result<RunResult<T>> {
    cfg.validate()?;
    let model = cfg.model.as_ref();
    let per_tick = cfg.steps_per_tick()?;
    let n_steps = (cfg.duration / cfg.dt).as_f64().round() as usize;

    let target = constraint_values(model, &cfg.initial_q);
    let (mut q, mut qd) = (cfg.initial_q.clone(), cfg.initial_qd.clone());
    if let Some(p) = &cfg.perturbation {
        q += &p.q;
        qd += &p.qd;
    }
    let (q, qd) = project_to_constraints(model, &q, &qd, &target)?;
    let mut state = State { q, qd };
    let stab = cfg.baumgarte.map(|(alpha, beta)| Stabilization {
        alpha,
        beta,
        target: target.clone(),
    });
    let contact = contact_rows(model, true, true)?;
    let limits = model.torque_limits();

    let mut session = ControllerSession::new(cfg.controller.clone())?;
    if cfg.cold_shadow {
        session = session.with_cold_shadow();
    }
    let mut shadow = cfg.shadow.clone().map(ControllerSession::new).transpose()?;

    let mut rows: Vec<TelemetryRow<T>> = Vec::new();
    let mut effort = T::zero();
    let mut failure = None;
    let mut u = DVector::zeros(model.n_u());
    for k in 0..n_steps {
        let t = cfg.dt * T::lit(k as f64);
        if k % per_tick == 0 {
            match control_row(cfg, model, &mut session, shadow.as_mut(), &state, t, &contact, &limits, stab.as_ref()) {
                Ok(row) => {
                    u = row.u.clone();
                    rows.push(row);
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        effort += u.norm_squared() * cfg.dt;
        match step(model, &state, &u, stab.as_ref(), cfg.dt) {
            Ok(next) if linalg::all_finite_vec(&next.q) && linalg::all_finite_vec(&next.qd) => state = next,
            Ok(_) | Err(Error::ModelEvaluation(_)) => {
                failure = Some(Error::BlowUp {
                    t: (t + cfg.dt).as_f64(),
                    last_good: state.q.iter().chain(state.qd.iter()).map(|x| x.as_f64()).collect(),
                });
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    fill_finite_differences(&mut rows);
    let summary = summarize(&rows, effort);
    if let Some(e) = &failure {
        log::warn!("{}: run aborted: {e}", cfg.label);
    }
    Ok(RunResult {
        label: cfg.label.clone(),
        rows,
        summary,
        failure,
    })
}

#[allow(clippy::too_many_arguments)]
fn control_row<T: Real>(
    cfg: &SimConfig<T>,
    model: &dyn RobotModel<T>,
    session: &mut ControllerSession<T>,
    shadow: Option<&mut ControllerSession<T>>,
    state: &State<T>,
    t: T,
    contact: &nalgebra::DMatrix<T>,
    limits: &[(T, T)],
    stab: Option<&Stabilization<T>>,
) -> Result<TelemetryRow<T>> {
    let ctx = TickContext::new(model, &cfg.outputs, &cfg.clf, &state.q, &state.qd, t)?;
    let shadow_sample = match shadow {
        Some(s) => {
            s.set_previous(session.previous().cloned());
            s.tick_in(model, &ctx, &cfg.clf).ok().map(|st| ShadowSample {
                status: st.status,
                qp_status: st.qp_status,
                vdot: st.vdot,
                gamma_inst: st.gamma_inst,
            })
        }
        None => None,
    };
    let mut tick = session.tick_in(model, &ctx, &cfg.clf)?;
    if !cfg.record_timing {
        tick.solve_us = 0;
    }
    let (qdd, lambda) = accelerations(model, state, &tick.u, stab)?;
    let vdot = ctx.vdot(&qdd);
    let dynamics_residual = if tick.lambda.len() == model.n_constraints() {
        ctx.terms.residual(&tick.qdd, &tick.u, &tick.lambda)
    } else {
        T::zero()
    };
    let pyramid_violation = if contact.nrows() > 0 {
        (contact * &tick.lambda).max().max(T::zero())
    } else {
        T::zero()
    };
    let torque_violation = limits
        .iter()
        .zip(tick.u.iter())
        .fold(T::zero(), |m, ((lo, hi), &ui)| m.max(ui - *hi).max(*lo - ui));
    let (j, _) = constraint_stack(model, &state.q, &state.qd);
    let holonomic_velocity = if j.nrows() > 0 { linalg::max_abs_vec(&(j * &state.qd)) } else { T::zero() };
    Ok(TelemetryRow {
        t,
        q: state.q.clone(),
        qd: state.qd.clone(),
        u: tick.u.clone(),
        lambda,
        v: ctx.v,
        vdot_analytic: vdot,
        vdot_fd: T::zero(),
        gamma_inst: if ctx.v > T::zero() { -vdot / ctx.v } else { T::lit(f64::NAN) },
        delta: tick.delta,
        eta: ctx.outputs.eta.clone(),
        eta_norm: ctx.outputs.eta.norm(),
        status: tick.status,
        active_set: tick.active_set.len(),
        solve_us: tick.solve_us,
        dynamics_residual,
        pyramid_violation,
        torque_violation,
        holonomic_velocity,
        tick,
        shadow: shadow_sample,
    })
}

fn fill_finite_differences<T: Real>(rows: &mut [TelemetryRow<T>]) {
    let n = rows.len();
    if n < 2 {
        return;
    }
    for k in 0..n {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
        rows[k].vdot_fd = (rows[b].v - rows[a].v) / (rows[b].t - rows[a].t);
    }
}

fn summarize<T: Real>(rows: &[TelemetryRow<T>], effort: T) -> RunSummary<T> {
    let optimal = |r: &&TelemetryRow<T>| r.status == TickStatus::Optimal;
    let max_of = |f: &dyn Fn(&TelemetryRow<T>) -> T, only_optimal: bool| {
        rows.iter()
            .filter(|r| !only_optimal || optimal(r))
            .fold(T::zero(), |m, r| m.max(f(r)))
    };
    let finite = rows.iter().all(|r| {
        linalg::all_finite_vec(&r.u) && linalg::all_finite_vec(&r.q) && linalg::all_finite_vec(&r.qd) && r.v.is_finite_value()
    });
    RunSummary {
        ticks: rows.len(),
        peak_v: max_of(&|r| r.v, false),
        time_to_converge: rows
            .iter()
            .find(|r| r.eta_norm < T::lit(CONVERGENCE_TOLERANCE))
            .map(|r| r.t),
        final_eta_norm: rows.last().map_or(T::zero(), |r| r.eta_norm),
        control_effort: effort,
        flagged_ticks: rows.iter().filter(|r| r.status.is_flagged()).count(),
        max_dynamics_residual: max_of(&|r| r.dynamics_residual, true),
        max_pyramid_violation: max_of(&|r| r.pyramid_violation, true),
        max_torque_violation: max_of(&|r| r.torque_violation, false),
        max_holonomic_velocity: max_of(&|r| r.holonomic_velocity, false),
        max_abs_u: max_of(&|r| linalg::max_abs_vec(&r.u), false),
        all_finite: finite,
    }
}

/// Runs several configurations that share a model and output set, each on
/// its own thread with an isolated controller session.
pub fn compare<T: Real>(cfgs: &[SimConfig<T>]) -> Result<Vec<RunResult<T>>> {
    if let Some(first) = cfgs.first() {
        let labels = |c: &SimConfig<T>| -> Vec<String> {
            c.outputs
                .velocity_outputs()
                .iter()
                .chain(c.outputs.position_outputs())
                .map(|o| o.label.clone())
                .collect()
        };
        for c in &cfgs[1..] {
            if c.model.name() != first.model.name() || labels(c) != labels(first) || c.initial_q != first.initial_q {
                return Err(Error::arg(format!(
                    "compare: run '{}' does not share model, outputs and initial state with '{}'",
                    c.label, first.label
                )));
            }
        }
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = cfgs.iter().map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::arg("compare: worker thread panicked"))))
            .collect()
    })
}
