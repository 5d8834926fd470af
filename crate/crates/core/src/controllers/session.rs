use nalgebra::DVector;

use super::assemble::{assemble, classical_terms, fbl_from_context, Assembled, TickContext};
use super::spec::{ControllerSpec, Variant};
use crate::dynamics::{forward_dynamics, RobotModel};
use crate::outputs::OutputSet;
use crate::qp::{QpProblem, QpSolution, QpSolver, QpStatus};
use crate::resclf::ResClf;
use crate::{Error, Real, Result};

/// How the applied torque of a tick was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickStatus {
    /// The configured QP solved to optimality.
    Optimal,
    /// Closed-form torque (feedback linearization).
    Direct,
    /// Fallback 1: the CLF row was relaxed with an injected δ.
    Relaxed,
    /// Fallback 2: contact rows were dropped as well.
    FrictionDropped,
    /// Fallback 3: previous torque reused.
    Held,
}

impl TickStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TickStatus::Optimal => "optimal",
            TickStatus::Direct => "direct",
            TickStatus::Relaxed => "relaxed",
            TickStatus::FrictionDropped => "no_friction",
            TickStatus::Held => "held",
        }
    }

    pub fn is_flagged(self) -> bool {
        matches!(self, TickStatus::Relaxed | TickStatus::FrictionDropped | TickStatus::Held)
    }
}

#[derive(Debug, Clone)]
pub struct ControlTick<T: Real> {
    pub t: T,
    pub u: DVector<T>,
    pub qdd: DVector<T>,
    pub lambda: DVector<T>,
    pub delta: T,
    pub v: T,
    /// `V̇` at the commanded accelerations.
    pub vdot: T,
    /// `L_G V J_y q̈`, the part of `V̇` the plus variants put in the cost.
    pub vdot_qdd_term: T,
    /// `−V̇ / V`; NaN when `V = 0`.
    pub gamma_inst: T,
    pub eta_norm: T,
    pub status: TickStatus,
    /// Status of the first QP attempt, if any QP was solved.
    pub qp_status: Option<QpStatus>,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// Iterations of an additional cold solve, when requested.
    pub cold_iterations: Option<usize>,
    pub solve_us: u64,
}

impl<T: Real> ControlTick<T> {
    fn from_accel(ctx: &TickContext<T>, u: DVector<T>, qdd: DVector<T>, lambda: DVector<T>, delta: T, status: TickStatus) -> Self {
        let vdot = ctx.vdot(&qdd);
        ControlTick {
            t: ctx.t,
            vdot_qdd_term: ctx.vdot_qdd_term(&qdd),
            u,
            qdd,
            lambda,
            delta,
            v: ctx.v,
            vdot,
            gamma_inst: if ctx.v > T::zero() { -vdot / ctx.v } else { T::lit(f64::NAN) },
            eta_norm: ctx.outputs.eta.norm(),
            status,
            qp_status: None,
            active_set: Vec::new(),
            iterations: 0,
            cold_iterations: None,
            solve_us: 0,
        }
    }
}

struct WarmStart {
    variant: Variant,
    active: Vec<usize>,
}

/// Stateful controller: warm starts, previous torque and the fallback chain.
/// One session per simulation run.
pub struct ControllerSession<T: Real> {
    spec: ControllerSpec<T>,
    solver: QpSolver<T>,
    prev: Option<ControlTick<T>>,
    warm: Option<WarmStart>,
    warm_enabled: bool,
    cold_shadow: bool,
    last_problem: Option<QpProblem<T>>,
}

impl<T: Real> ControllerSession<T> {
    pub fn new(spec: ControllerSpec<T>) -> Result<Self> {
        spec.validate()?;
        Ok(ControllerSession {
            spec,
            solver: QpSolver::new(),
            prev: None,
            warm: None,
            warm_enabled: true,
            cold_shadow: false,
            last_problem: None,
        })
    }

    pub fn without_warm_start(mut self) -> Self {
        self.warm_enabled = false;
        self
    }

    /// Also solves every primary QP cold and records its iteration count.
    pub fn with_cold_shadow(mut self) -> Self {
        self.cold_shadow = true;
        self
    }

    pub fn spec(&self) -> &ControllerSpec<T> {
        &self.spec
    }

    pub fn previous(&self) -> Option<&ControlTick<T>> {
        self.prev.as_ref()
    }

    /// Sets the tick whose torque seeds the torque-rate term and the hold
    /// fallback; an optimal tick also seeds the warm start.
    pub fn set_previous(&mut self, tick: Option<ControlTick<T>>) {
        self.warm = tick.as_ref().filter(|t| t.status == TickStatus::Optimal).map(|t| WarmStart {
            variant: self.spec.variant,
            active: t.active_set.clone(),
        });
        self.prev = tick;
    }

    /// The most recently solved QP.
    pub fn last_problem(&self) -> Option<&QpProblem<T>> {
        self.last_problem.as_ref()
    }

    pub fn tick(
        &mut self,
        model: &dyn RobotModel<T>,
        outputs: &OutputSet<T>,
        clf: &ResClf<T>,
        q: &DVector<T>,
        qd: &DVector<T>,
        t: T,
    ) -> Result<ControlTick<T>> {
        let ctx = TickContext::new(model, outputs, clf, q, qd, t)?;
        self.tick_in(model, &ctx, clf)
    }

    pub fn tick_in(&mut self, model: &dyn RobotModel<T>, ctx: &TickContext<T>, clf: &ResClf<T>) -> Result<ControlTick<T>> {
        let tick = self.compute(model, ctx, clf)?;
        self.prev = Some(tick.clone());
        Ok(tick)
    }

    fn compute(&mut self, model: &dyn RobotModel<T>, ctx: &TickContext<T>, clf: &ResClf<T>) -> Result<ControlTick<T>> {
        if self.spec.variant == Variant::Fbl {
            return self.feedback_linearization(model, ctx, clf);
        }
        let prev_u = self.prev.as_ref().map(|p| p.u.clone());
        let mut attempts = vec![(self.spec.clone(), TickStatus::Optimal)];
        if let Some(relaxed) = with_injected_delta(self.spec.variant) {
            attempts.push((self.spec.with_variant(relaxed), TickStatus::Relaxed));
        }
        if self.spec.friction || self.spec.rollover {
            let last = attempts.last().unwrap().0.clone();
            attempts.push((
                ControllerSpec {
                    friction: false,
                    rollover: false,
                    ..last
                },
                TickStatus::FrictionDropped,
            ));
        }

        let mut first_status = None;
        let mut total_us = 0;
        let mut cold_iterations = None;
        for (k, (spec, status)) in attempts.iter().enumerate() {
            let assembled = assemble(model, ctx, clf, spec, prev_u.as_ref())?.expect("QP variant");
            let sol = self.solve(spec.variant, &assembled)?;
            if k == 0 && self.cold_shadow {
                cold_iterations = Some(QpSolver::new().solve(&assembled.problem, None)?.iterations);
            }
            total_us += sol.solve_us;
            first_status.get_or_insert(sol.status);
            self.last_problem = Some(assembled.problem.clone());
            if sol.status == QpStatus::Optimal {
                let d = assembled.decode(&sol.x);
                let mut tick = ControlTick::from_accel(ctx, d.u, d.qdd, d.lambda, d.delta, *status);
                tick.qp_status = first_status;
                tick.active_set = sol.active_set;
                tick.iterations = sol.iterations;
                tick.cold_iterations = cold_iterations;
                tick.solve_us = total_us;
                if status.is_flagged() {
                    log::debug!("t = {:.4}: tick resolved by fallback '{}'", ctx.t.as_f64(), status.as_str());
                }
                return Ok(tick);
            }
        }

        let Some(prev) = prev_u else {
            return Err(Error::Tick {
                t: ctx.t.as_f64(),
                reason: format!(
                    "{} QP is {} and no previous torque is available",
                    self.spec.variant,
                    first_status.map_or("unsolved", |s| s.as_str())
                ),
            });
        };
        let (qdd, lambda) = forward_dynamics(&ctx.terms, &prev, None)?;
        let mut tick = ControlTick::from_accel(ctx, prev, qdd, lambda, T::zero(), TickStatus::Held);
        tick.qp_status = first_status;
        tick.cold_iterations = cold_iterations;
        tick.solve_us = total_us;
        log::debug!("t = {:.4}: all QP attempts failed, holding previous torque", ctx.t.as_f64());
        Ok(tick)
    }

    fn solve(&mut self, variant: Variant, a: &Assembled<T>) -> Result<QpSolution<T>> {
        let n_ineq = a.problem.inequality_sources().len();
        let warm = self
            .warm
            .as_ref()
            .filter(|w| self.warm_enabled && w.variant == variant && w.active.iter().all(|&i| i < n_ineq))
            .map(|w| w.active.clone());
        let sol = self.solver.solve(&a.problem, warm.as_deref())?;
        if sol.status == QpStatus::Optimal {
            self.warm = Some(WarmStart {
                variant,
                active: sol.active_set.clone(),
            });
        }
        Ok(sol)
    }

    fn feedback_linearization(
        &mut self,
        model: &dyn RobotModel<T>,
        ctx: &TickContext<T>,
        clf: &ResClf<T>,
    ) -> Result<ControlTick<T>> {
        let mut u = fbl_from_context(ctx, clf)?;
        if self.spec.torque_limits {
            for (k, (lo, hi)) in model.torque_limits().into_iter().enumerate() {
                u[k] = u[k].max(lo).min(hi);
            }
        }
        let ct = classical_terms(ctx)?;
        let qdd = &ct.qdd_drift + &ct.qdd_input * &u;
        let lambda = ct.forces.eval(&u);
        Ok(ControlTick::from_accel(ctx, u, qdd, lambda, T::zero(), TickStatus::Direct))
    }
}

fn with_injected_delta(v: Variant) -> Option<Variant> {
    match v {
        Variant::ClfQp => Some(Variant::ClfQpDelta),
        Variant::IdClfQp => Some(Variant::IdClfQpDelta),
        Variant::IdClfQpPlus => Some(Variant::IdClfQpPlusDelta),
        _ => None,
    }
}

/// One tick with an explicit previous tick and a fresh session.
#[allow(clippy::too_many_arguments)]
pub fn control_tick<T: Real>(
    spec: &ControllerSpec<T>,
    model: &dyn RobotModel<T>,
    outputs: &OutputSet<T>,
    clf: &ResClf<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
    t: T,
    prev: Option<&ControlTick<T>>,
) -> Result<ControlTick<T>> {
    let mut s = ControllerSession::new(spec.clone())?;
    s.set_previous(prev.cloned());
    s.tick(model, outputs, clf, q, qd, t)
}
