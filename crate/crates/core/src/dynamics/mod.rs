//! Rigid-body models and the terms of the constrained manipulator equations
//!
//! ```text
//! D(q) q̈ + H(q, q̇) = B u + Jᵀ(q) λ
//! J(q) q̈ + J̇(q, q̇) q̇ = 0
//! ```

mod cart_pole;
mod crouching_leg;
mod double_pendulum;
pub mod planar;

pub use cart_pole::{CartPole, CartPoleParams};
pub use crouching_leg::{CrouchingLeg, CrouchingLegParams};
pub use double_pendulum::{DoublePendulum, DoublePendulumParams};

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::linalg::{self, all_finite, all_finite_vec};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Contact,
    Internal,
}

/// Where the components of a contact wrench live inside a constraint's λ
/// block, plus the friction and support-patch parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactGeometry<T: Real> {
    pub normal: usize,
    pub tangent_x: Option<usize>,
    pub tangent_y: Option<usize>,
    /// Moment bounded by the patch length `l`.
    pub moment_length: Option<usize>,
    /// Moment bounded by the patch width `w`.
    pub moment_width: Option<usize>,
    pub mu: T,
    pub length: T,
    pub width: T,
}

#[derive(Debug, Clone)]
pub struct HolonomicConstraint<T: Real> {
    pub label: String,
    pub dim: usize,
    pub kind: ConstraintKind,
    pub contact: Option<ContactGeometry<T>>,
}

/// Scalar task-space quantity used to build tracking outputs.
#[derive(Debug, Clone)]
pub struct TaskKinematics<T: Real> {
    pub value: T,
    pub jacobian: RowDVector<T>,
    pub jdot_qdot: T,
}

/// A planar rigid-body model with closed-form kinematics.
///
/// Implementations are immutable after construction and shareable across
/// threads.
pub trait RobotModel<T: Real>: Send + Sync {
    fn name(&self) -> &str;
    fn n_q(&self) -> usize;
    fn n_u(&self) -> usize;
    fn mass_matrix(&self, q: &DVector<T>) -> DMatrix<T>;
    /// Coriolis, gravity and non-conservative terms `H(q, q̇)`.
    fn bias(&self, q: &DVector<T>, qd: &DVector<T>) -> DVector<T>;
    fn actuation(&self) -> DMatrix<T>;
    fn constraints(&self) -> &[HolonomicConstraint<T>];
    /// Position-level value `h_i(q)` of constraint `index`.
    fn constraint_value(&self, index: usize, q: &DVector<T>) -> DVector<T>;
    fn constraint_jacobian(&self, index: usize, q: &DVector<T>) -> DMatrix<T>;
    /// `J̇_i(q, q̇) q̇` for constraint `index`.
    fn constraint_bias(&self, index: usize, q: &DVector<T>, qd: &DVector<T>) -> DVector<T>;
    /// Per-actuator `(lower, upper)` torque bounds in N·m (N for prismatic).
    fn torque_limits(&self) -> Vec<(T, T)>;
    /// Kinetic plus potential energy.
    fn energy(&self, q: &DVector<T>, qd: &DVector<T>) -> T;
    /// True when no dissipative terms are configured.
    fn is_conservative(&self) -> bool;
    fn default_configuration(&self) -> DVector<T>;
    fn task_names(&self) -> Vec<&'static str>;
    fn task(&self, name: &str, q: &DVector<T>, qd: &DVector<T>) -> Option<TaskKinematics<T>>;

    fn n_constraints(&self) -> usize {
        self.constraints().iter().map(|c| c.dim).sum()
    }

    /// Offset of each constraint's rows inside the stacked λ vector.
    fn constraint_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.constraints()
            .iter()
            .map(|c| {
                let o = off;
                off += c.dim;
                o
            })
            .collect()
    }
}

/// Everything needed to write the constrained equations of motion at a state.
#[derive(Debug, Clone)]
pub struct DynamicsTerms<T: Real> {
    pub mass: DMatrix<T>,
    pub bias: DVector<T>,
    pub actuation: DMatrix<T>,
    pub jacobian: DMatrix<T>,
    pub jdot_qdot: DVector<T>,
}

impl<T: Real> DynamicsTerms<T> {
    /// `‖D q̈ + H − B u − Jᵀ λ‖_∞`.
    pub fn residual(&self, qdd: &DVector<T>, u: &DVector<T>, lambda: &DVector<T>) -> T {
        let r = &self.mass * qdd + &self.bias - &self.actuation * u - self.jacobian.transpose() * lambda;
        linalg::max_abs_vec(&r)
    }
}

fn check_state<T: Real>(model: &dyn RobotModel<T>, q: &DVector<T>, qd: &DVector<T>) -> Result<()> {
    let n = model.n_q();
    if q.len() != n || qd.len() != n {
        return Err(Error::arg(format!(
            "{}: state has dimensions ({}, {}), expected {n}",
            model.name(),
            q.len(),
            qd.len()
        )));
    }
    Ok(())
}

/// Stacked constraint Jacobian and `J̇q̇` over every declared constraint.
pub fn constraint_stack<T: Real>(
    model: &dyn RobotModel<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
) -> (DMatrix<T>, DVector<T>) {
    let n = model.n_q();
    let blocks: Vec<DMatrix<T>> = (0..model.constraints().len())
        .map(|i| model.constraint_jacobian(i, q))
        .collect();
    let biases: Vec<DVector<T>> = (0..model.constraints().len())
        .map(|i| model.constraint_bias(i, q, qd))
        .collect();
    (linalg::stack_rows(&blocks, n), linalg::stack_vecs(&biases))
}

/// Stacked position-level constraint values.
pub fn constraint_values<T: Real>(model: &dyn RobotModel<T>, q: &DVector<T>) -> DVector<T> {
    let parts: Vec<DVector<T>> = (0..model.constraints().len())
        .map(|i| model.constraint_value(i, q))
        .collect();
    linalg::stack_vecs(&parts)
}

pub fn eval_dynamics<T: Real>(
    model: &dyn RobotModel<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
) -> Result<DynamicsTerms<T>> {
    check_state(model, q, qd)?;
    let mass = model.mass_matrix(q);
    let bias = model.bias(q, qd);
    let (jacobian, jdot_qdot) = constraint_stack(model, q, qd);
    if !all_finite(&mass) {
        return Err(Error::ModelEvaluation(format!("{}: mass matrix", model.name())));
    }
    if !all_finite_vec(&bias) {
        return Err(Error::ModelEvaluation(format!("{}: bias forces", model.name())));
    }
    if !all_finite(&jacobian) || !all_finite_vec(&jdot_qdot) {
        return Err(Error::ModelEvaluation(format!("{}: constraint terms", model.name())));
    }
    Ok(DynamicsTerms {
        mass,
        bias,
        actuation: model.actuation(),
        jacobian,
        jdot_qdot,
    })
}

/// Affine map from torques to constraint forces, `λ(u) = λ₀ + Λ u`,
/// obtained by eliminating λ from the constrained equations.
#[derive(Debug, Clone)]
pub struct ConstraintForceMap<T: Real> {
    pub offset: DVector<T>,
    pub gain: DMatrix<T>,
}

impl<T: Real> ConstraintForceMap<T> {
    pub fn eval(&self, u: &DVector<T>) -> DVector<T> {
        &self.offset + &self.gain * u
    }
}

/// Builds `λ(u)` with an optional extra acceleration-level term `extra`
/// added to `J̇q̇` (used for constraint stabilization).
pub fn constraint_force_map<T: Real>(
    terms: &DynamicsTerms<T>,
    extra: Option<&DVector<T>>,
) -> Result<ConstraintForceMap<T>> {
    let n_h = terms.jacobian.nrows();
    let n_u = terms.actuation.ncols();
    if n_h == 0 {
        return Ok(ConstraintForceMap {
            offset: DVector::zeros(0),
            gain: DMatrix::zeros(0, n_u),
        });
    }
    let jt = terms.jacobian.transpose();
    // D⁻¹ [Jᵀ, H, B]
    let n = terms.mass.nrows();
    let mut rhs = DMatrix::zeros(n, n_h + 1 + n_u);
    rhs.view_mut((0, 0), (n, n_h)).copy_from(&jt);
    rhs.set_column(n_h, &terms.bias);
    rhs.view_mut((0, n_h + 1), (n, n_u)).copy_from(&terms.actuation);
    let dinv = linalg::spd_solve(&terms.mass, &rhs, "mass matrix D(q)")?;
    let dinv_jt = dinv.columns(0, n_h).into_owned();
    let dinv_h = dinv.column(n_h).into_owned();
    let dinv_b = dinv.columns(n_h + 1, n_u).into_owned();
    let schur = &terms.jacobian * &dinv_jt;
    let mut drift = &terms.jacobian * &dinv_h - &terms.jdot_qdot;
    if let Some(e) = extra {
        drift -= e;
    }
    let mut rhs2 = DMatrix::zeros(n_h, 1 + n_u);
    rhs2.set_column(0, &drift);
    rhs2.view_mut((0, 1), (n_h, n_u))
        .copy_from(&(-(&terms.jacobian * &dinv_b)));
    let sol = linalg::spd_solve(&schur, &rhs2, "constraint inertia J D⁻¹ Jᵀ")?;
    Ok(ConstraintForceMap {
        offset: sol.column(0).into_owned(),
        gain: sol.columns(1, n_u).into_owned(),
    })
}

/// Explicit constraint forces
/// `λ = (J D⁻¹ Jᵀ)⁻¹ (J D⁻¹ (H − B u) − J̇ q̇)`.
pub fn solve_constraint_forces<T: Real>(
    model: &dyn RobotModel<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
    u: &DVector<T>,
) -> Result<DVector<T>> {
    if u.len() != model.n_u() {
        return Err(Error::arg(format!("torque vector has length {}, expected {}", u.len(), model.n_u())));
    }
    let terms = eval_dynamics(model, q, qd)?;
    Ok(constraint_force_map(&terms, None)?.eval(u))
}

/// Forward dynamics: `q̈` and `λ` for applied torques.
pub fn forward_dynamics<T: Real>(
    terms: &DynamicsTerms<T>,
    u: &DVector<T>,
    extra: Option<&DVector<T>>,
) -> Result<(DVector<T>, DVector<T>)> {
    let lambda = constraint_force_map(terms, extra)?.eval(u);
    let rhs = &terms.actuation * u + terms.jacobian.transpose() * &lambda - &terms.bias;
    let qdd = linalg::spd_solve_vec(&terms.mass, &rhs, "mass matrix D(q)")?;
    Ok((qdd, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMode {
    /// Ignore constraint forces.
    None,
    /// Substitute the explicit constraint-force solution.
    Eliminate,
}

/// Drift and input matrix of `ẋ = f(x) + g(x) u` with `x = (q, q̇)`.
#[derive(Debug, Clone)]
pub struct VectorFields<T: Real> {
    pub f: DVector<T>,
    pub g: DMatrix<T>,
    /// Constraint forces as a function of `u` (empty when unconstrained or
    /// in [`LambdaMode::None`]).
    pub forces: ConstraintForceMap<T>,
}

impl<T: Real> VectorFields<T> {
    /// Acceleration part of the drift, `f₂`.
    pub fn drift_accel(&self) -> DVector<T> {
        let n = self.f.len() / 2;
        self.f.rows(n, n).into_owned()
    }

    /// Acceleration part of the input matrix, `g₂`.
    pub fn input_accel(&self) -> DMatrix<T> {
        let n = self.f.len() / 2;
        self.g.rows(n, n).into_owned()
    }
}

pub fn vector_fields<T: Real>(
    model: &dyn RobotModel<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
    mode: LambdaMode,
) -> Result<VectorFields<T>> {
    let terms = eval_dynamics(model, q, qd)?;
    vector_fields_from_terms(&terms, qd, mode)
}

pub fn vector_fields_from_terms<T: Real>(
    terms: &DynamicsTerms<T>,
    qd: &DVector<T>,
    mode: LambdaMode,
) -> Result<VectorFields<T>> {
    let n = terms.mass.nrows();
    let n_u = terms.actuation.ncols();
    let forces = match mode {
        LambdaMode::Eliminate => constraint_force_map(terms, None)?,
        LambdaMode::None => ConstraintForceMap {
            offset: DVector::zeros(0),
            gain: DMatrix::zeros(0, n_u),
        },
    };
    let (drift_force, input_force) = if forces.offset.is_empty() {
        (-&terms.bias, terms.actuation.clone())
    } else {
        let jt = terms.jacobian.transpose();
        (&jt * &forces.offset - &terms.bias, &terms.actuation + &jt * &forces.gain)
    };
    let mut rhs = DMatrix::zeros(n, 1 + n_u);
    rhs.set_column(0, &drift_force);
    rhs.view_mut((0, 1), (n, n_u)).copy_from(&input_force);
    let sol = linalg::spd_solve(&terms.mass, &rhs, "mass matrix D(q)")?;
    let mut f = DVector::zeros(2 * n);
    f.rows_mut(0, n).copy_from(qd);
    f.rows_mut(n, n).copy_from(&sol.column(0));
    let mut g = DMatrix::zeros(2 * n, n_u);
    g.view_mut((n, 0), (n, n_u)).copy_from(&sol.columns(1, n_u));
    Ok(VectorFields { f, g, forces })
}

/// Maximum elementwise discrepancy between analytic constraint terms and
/// central finite differences.
#[derive(Debug, Clone, Copy)]
pub struct FiniteDiffReport<T> {
    pub jacobian_error: T,
    pub jdot_qdot_error: T,
}

impl<T: Real> FiniteDiffReport<T> {
    pub fn max_error(&self) -> T {
        self.jacobian_error.max(self.jdot_qdot_error)
    }
}

pub fn finite_diff_check<T: Real>(
    model: &dyn RobotModel<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
    h: T,
) -> Result<FiniteDiffReport<T>> {
    check_state(model, q, qd)?;
    if h <= T::zero() {
        return Err(Error::arg("finite-difference step must be positive"));
    }
    let n = model.n_q();
    let two_h = h + h;
    let (jac, jdqd) = constraint_stack(model, q, qd);
    let mut jac_err = T::zero();
    for j in 0..n {
        let mut qp = q.clone();
        qp[j] += h;
        let mut qm = q.clone();
        qm[j] -= h;
        let fd = (constraint_values(model, &qp) - constraint_values(model, &qm)) / two_h;
        for i in 0..fd.len() {
            jac_err = jac_err.max((fd[i] - jac[(i, j)]).abs());
        }
    }
    // d/dt [J(q + t q̇) q̇] at t = 0 equals J̇ q̇.
    let qp = q + qd * h;
    let qm = q - qd * h;
    let (jp, _) = constraint_stack(model, &qp, qd);
    let (jm, _) = constraint_stack(model, &qm, qd);
    let fd = (jp * qd - jm * qd) / two_h;
    let jdot_err = (fd - jdqd).iter().fold(T::zero(), |a, v| a.max(v.abs()));
    Ok(FiniteDiffReport {
        jacobian_error: jac_err,
        jdot_qdot_error: jdot_err,
    })
}

/// Projects a configuration onto `h(q) = target` (Gauss–Newton, minimum-norm
/// corrections) and the velocity onto the null space of `J`.
pub fn project_to_constraints<T: Real>(
    model: &dyn RobotModel<T>,
    q: &DVector<T>,
    qd: &DVector<T>,
    target: &DVector<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    if model.constraints().is_empty() {
        return Ok((q.clone(), qd.clone()));
    }
    let mut q = q.clone();
    for _ in 0..50 {
        let r = constraint_values(model, &q) - target;
        if linalg::max_abs_vec(&r) < T::default_epsilon() * T::lit(100.0) {
            break;
        }
        let (j, _) = constraint_stack(model, &q, qd);
        let jjt = &j * j.transpose();
        let step = j.transpose() * linalg::spd_solve_vec(&jjt, &r, "J Jᵀ")?;
        q -= step;
    }
    let (j, _) = constraint_stack(model, &q, qd);
    let jjt = &j * j.transpose();
    let corr = j.transpose() * linalg::spd_solve_vec(&jjt, &(&j * qd), "J Jᵀ")?;
    Ok((q, qd - corr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let m = DoublePendulum::<f64>::new(DoublePendulumParams::default());
        let err = eval_dynamics(&m, &DVector::zeros(3), &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn unconstrained_model_has_empty_constraint_forces() {
        let m = DoublePendulum::<f64>::new(DoublePendulumParams::default());
        let lam = solve_constraint_forces(&m, &DVector::zeros(2), &DVector::zeros(2), &DVector::zeros(2)).unwrap();
        assert_eq!(lam.len(), 0);
    }

    #[test]
    fn vector_field_position_block_is_velocity_and_input_top_block_zero() {
        let m = DoublePendulum::<f64>::new(DoublePendulumParams::default());
        let q = DVector::from_vec(vec![0.4, -0.2]);
        let qd = DVector::zeros(2);
        let vf = vector_fields(&m, &q, &qd, LambdaMode::None).unwrap();
        assert_eq!(vf.f.rows(0, 2).norm(), 0.0);
        assert_eq!(vf.g.rows(0, 2).norm(), 0.0);
        let terms = eval_dynamics(&m, &q, &qd).unwrap();
        let expect = terms.mass.clone().cholesky().unwrap().solve(&(-&terms.bias));
        for i in 0..2 {
            assert_relative_eq!(vf.f[2 + i], expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn eliminated_constraint_forces_enforce_acceleration_constraint() {
        let m = CrouchingLeg::<f64>::new(CrouchingLegParams::default());
        let q = m.default_configuration();
        let qd = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.3, -0.4, 0.2]);
        let terms = eval_dynamics(&m, &q, &qd).unwrap();
        let u = DVector::from_vec(vec![5.0, -20.0, 3.0]);
        let (qdd, _lam) = forward_dynamics(&terms, &u, None).unwrap();
        let r = &terms.jacobian * qdd + &terms.jdot_qdot;
        assert!(r.amax() < 1e-10);
    }
}
