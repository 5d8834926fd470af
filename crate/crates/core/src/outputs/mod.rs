//! Tracking outputs, desired trajectories and the phase variable.
//!
//! Relative-degree-1 outputs are velocities `y₁ = J_p q̇ − y₁ᵈ(τ)` of a
//! configuration-level quantity `p(q)`; relative-degree-2 outputs are
//! positions `y₂ = p(q) − y₂ᵈ(τ)`. Stacking rows as `[y₁; y₂]` gives
//!
//! ```text
//! (ẏ₁, ÿ₂) = J_y q̈ + J̇_y q̇
//! ```

mod phase;
mod trajectory;

pub use phase::{eval_phase, Phase, PhaseDriver, PhaseState};
pub use trajectory::{Segment, Spline, MAX_DEGREE};

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::dynamics::RobotModel;
use crate::linalg::{self, RankReport};
use crate::{Error, Real, Result};

/// Configuration-level quantity `p(q)` behind an output.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputMap<T: Real> {
    Coordinate(usize),
    /// `p = c·q`.
    Linear(Vec<T>),
    /// A named task exposed by the model.
    Task(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output<T: Real> {
    pub label: String,
    pub map: OutputMap<T>,
    pub desired: Spline<T>,
}

impl<T: Real> Output<T> {
    pub fn new(label: impl Into<String>, map: OutputMap<T>, desired: Spline<T>) -> Self {
        Output {
            label: label.into(),
            map,
            desired,
        }
    }

    fn kinematics(
        &self,
        model: &dyn RobotModel<T>,
        q: &DVector<T>,
        qd: &DVector<T>,
    ) -> Result<(T, RowDVector<T>, T)> {
        let n = q.len();
        Ok(match &self.map {
            OutputMap::Coordinate(i) => {
                let mut row = RowDVector::zeros(n);
                row[*i] = T::one();
                (q[*i], row, T::zero())
            }
            OutputMap::Linear(c) => {
                let row = RowDVector::from_row_slice(c);
                ((&row * q)[0], row, T::zero())
            }
            OutputMap::Task(name) => {
                let t = model
                    .task(name, q, qd)
                    .ok_or_else(|| Error::arg(format!("model has no task {name:?}")))?;
                (t.value, t.jacobian, t.jdot_qdot)
            }
        })
    }
}

/// Relative-degree-1 and -2 outputs plus their phase variable.
#[derive(Debug, Clone)]
pub struct OutputSet<T: Real> {
    velocity: Vec<Output<T>>,
    position: Vec<Output<T>>,
    phase: Phase<T>,
}

/// Everything the controllers need from the outputs at one state.
#[derive(Debug, Clone)]
pub struct OutputEval<T: Real> {
    pub phase: PhaseState<T>,
    pub y1: DVector<T>,
    pub y2: DVector<T>,
    pub y2_dot: DVector<T>,
    /// `η = (y₁, y₂, ẏ₂)`.
    pub eta: DVector<T>,
    /// Rows `[relative degree 1; relative degree 2]`.
    pub jacobian: DMatrix<T>,
    pub jdot_qdot: DVector<T>,
    /// Actual outputs `(y₁ᵃ, y₂ᵃ)`.
    pub actual: DVector<T>,
    pub desired: DVector<T>,
}

impl<T: Real> OutputSet<T> {
    pub fn new(
        model: &dyn RobotModel<T>,
        velocity: Vec<Output<T>>,
        position: Vec<Output<T>>,
        phase: Phase<T>,
    ) -> Result<Self> {
        if velocity.is_empty() && position.is_empty() {
            return Err(Error::Config("outputs: at least one output is required".into()));
        }
        let n = model.n_q();
        for o in velocity.iter().chain(position.iter()) {
            match &o.map {
                OutputMap::Coordinate(i) if *i >= n => {
                    return Err(Error::Config(format!(
                        "outputs.{}: coordinate {i} out of range for {} coordinates",
                        o.label, n
                    )))
                }
                OutputMap::Linear(c) if c.len() != n => {
                    return Err(Error::Config(format!(
                        "outputs.{}: linear map has {} entries, expected {n}",
                        o.label,
                        c.len()
                    )))
                }
                OutputMap::Task(name) if !model.task_names().contains(&name.as_str()) => {
                    return Err(Error::Config(format!(
                        "outputs.{}: model {} has no task {name:?} (available: {:?})",
                        o.label,
                        model.name(),
                        model.task_names()
                    )))
                }
                _ => {}
            }
        }
        phase.validate()?;
        if let Phase::State { output, .. } = &phase {
            if *output >= velocity.len() {
                return Err(Error::Config(format!(
                    "outputs.phase: state-based phase needs relative-degree-1 output {output}, only {} defined",
                    velocity.len()
                )));
            }
        }
        Ok(OutputSet {
            velocity,
            position,
            phase,
        })
    }

    /// Relative-degree-1 count `m₁`.
    pub fn m1(&self) -> usize {
        self.velocity.len()
    }

    /// Relative-degree-2 count `m₂`.
    pub fn m2(&self) -> usize {
        self.position.len()
    }

    pub fn m(&self) -> usize {
        self.m1() + self.m2()
    }

    pub fn eta_dim(&self) -> usize {
        self.m1() + 2 * self.m2()
    }

    pub fn phase(&self) -> &Phase<T> {
        &self.phase
    }

    pub fn velocity_outputs(&self) -> &[Output<T>] {
        &self.velocity
    }

    pub fn position_outputs(&self) -> &[Output<T>] {
        &self.position
    }

    pub fn evaluate(
        &self,
        model: &dyn RobotModel<T>,
        q: &DVector<T>,
        qd: &DVector<T>,
        t: T,
    ) -> Result<OutputEval<T>> {
        let n = model.n_q();
        if q.len() != n || qd.len() != n {
            return Err(Error::arg(format!(
                "outputs: state has dimensions ({}, {}), expected {n}",
                q.len(),
                qd.len()
            )));
        }
        let kin_v = self
            .velocity
            .iter()
            .map(|o| o.kinematics(model, q, qd))
            .collect::<Result<Vec<_>>>()?;
        let kin_p = self
            .position
            .iter()
            .map(|o| o.kinematics(model, q, qd))
            .collect::<Result<Vec<_>>>()?;
        let driver = match &self.phase {
            Phase::State { output, .. } => {
                let (value, jacobian, jdot_qdot) = &kin_v[*output];
                Some(PhaseDriver {
                    value: *value,
                    jacobian,
                    jdot_qdot: *jdot_qdot,
                })
            }
            Phase::Time { .. } => None,
        };
        let ph = eval_phase(&self.phase, t, qd, driver);

        let (m1, m2) = (self.m1(), self.m2());
        let m = m1 + m2;
        let mut y1 = DVector::zeros(m1);
        let mut y2 = DVector::zeros(m2);
        let mut y2_dot = DVector::zeros(m2);
        let mut jacobian = DMatrix::zeros(m, n);
        let mut jdot_qdot = DVector::zeros(m);
        let mut actual = DVector::zeros(m);
        let mut desired = DVector::zeros(m);

        for (i, (o, (_, jp, jdp))) in self.velocity.iter().zip(&kin_v).enumerate() {
            let [yd, dyd, _] = o.desired.eval(ph.tau);
            let ya = (jp * qd)[0];
            y1[i] = ya - yd;
            jacobian.set_row(i, jp);
            jdot_qdot[i] = *jdp - dyd * ph.rate;
            actual[i] = ya;
            desired[i] = yd;
        }
        for (i, (o, (p, jp, jdp))) in self.position.iter().zip(&kin_p).enumerate() {
            let [yd, dyd, ddyd] = o.desired.eval(ph.tau);
            let r = m1 + i;
            y2[i] = *p - yd;
            y2_dot[i] = (jp * qd)[0] - dyd * ph.rate;
            jacobian.set_row(r, &(jp - &ph.grad * dyd));
            jdot_qdot[r] = *jdp - ddyd * ph.rate * ph.rate - dyd * ph.accel_bias;
            actual[r] = *p;
            desired[r] = yd;
        }
        let mut eta = DVector::zeros(m1 + 2 * m2);
        eta.rows_mut(0, m1).copy_from(&y1);
        eta.rows_mut(m1, m2).copy_from(&y2);
        eta.rows_mut(m1 + m2, m2).copy_from(&y2_dot);
        if !linalg::all_finite_vec(&eta) || !linalg::all_finite(&jacobian) {
            return Err(Error::ModelEvaluation("output evaluation".into()));
        }
        Ok(OutputEval {
            phase: ph,
            y1,
            y2,
            y2_dot,
            eta,
            jacobian,
            jdot_qdot,
            actual,
            desired,
        })
    }

    /// `(J_y, J̇_y q̇)` with a rank report for `J_y`.
    pub fn output_jacobians(
        &self,
        model: &dyn RobotModel<T>,
        q: &DVector<T>,
        qd: &DVector<T>,
        t: T,
    ) -> Result<(DMatrix<T>, DVector<T>, RankReport<T>)> {
        let e = self.evaluate(model, q, qd, t)?;
        let rank = linalg::rank_report(&e.jacobian);
        if !rank.full_row_rank {
            log::warn!(
                "output Jacobian is rank deficient: rank {} of {}, singular values {:?}",
                rank.rank,
                e.jacobian.nrows(),
                rank.singular_values.iter().map(|s| s.as_f64()).collect::<Vec<_>>()
            );
        }
        Ok((e.jacobian, e.jdot_qdot, rank))
    }
}
