use nalgebra::{DMatrix, DVector};

use super::planar::{self, Angle, Body, PointKin};
use super::{ConstraintKind, ContactGeometry, HolonomicConstraint, RobotModel, TaskKinematics};
use crate::{Error, Real, Result};

/// Planar leg with a floating torso, thigh, shin and a flat foot bolted to
/// the ground through a patch contact.
///
/// `q = (x, z, φ, q_hip, q_knee, q_ankle)` where `(x, z)` is the hip and
/// `φ` the torso pitch. The foot's ankle point and absolute angle are held
/// fixed, giving contact forces `λ = (λx, λz, λm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrouchingLegParams<T: Real> {
    pub torso_mass: T,
    pub torso_inertia: T,
    /// Height of the torso centre of mass above the hip (m).
    pub torso_com: T,
    pub thigh_mass: T,
    pub thigh_length: T,
    pub shin_mass: T,
    pub shin_length: T,
    pub foot_mass: T,
    pub gravity: T,
    pub mu: T,
    /// Foot patch length along x (m).
    pub foot_length: T,
    pub foot_width: T,
    pub torque_limit: T,
    /// Viscous damping on the three actuated joints.
    pub damping: [T; 3],
    /// Hip height of the default configuration (m).
    pub stance_height: T,
}

impl<T: Real> Default for CrouchingLegParams<T> {
    fn default() -> Self {
        CrouchingLegParams {
            torso_mass: T::lit(15.0),
            torso_inertia: T::lit(0.3),
            torso_com: T::lit(0.2),
            thigh_mass: T::lit(2.0),
            thigh_length: T::lit(0.5),
            shin_mass: T::one(),
            shin_length: T::lit(0.5),
            foot_mass: T::lit(0.5),
            gravity: T::lit(9.81),
            mu: T::lit(0.7),
            foot_length: T::lit(0.2),
            foot_width: T::lit(0.1),
            torque_limit: T::lit(150.0),
            damping: [T::zero(); 3],
            stance_height: T::lit(0.9),
        }
    }
}

impl<T: Real> CrouchingLegParams<T> {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let v = T::lit(value);
        match key {
            "torso_mass" => self.torso_mass = v,
            "torso_inertia" => self.torso_inertia = v,
            "torso_com" => self.torso_com = v,
            "thigh_mass" => self.thigh_mass = v,
            "thigh_length" => self.thigh_length = v,
            "shin_mass" => self.shin_mass = v,
            "shin_length" => self.shin_length = v,
            "foot_mass" => self.foot_mass = v,
            "gravity" => self.gravity = v,
            "mu" => self.mu = v,
            "foot_length" => self.foot_length = v,
            "foot_width" => self.foot_width = v,
            "torque_limit" => self.torque_limit = v,
            "damping_hip" => self.damping[0] = v,
            "damping_knee" => self.damping[1] = v,
            "damping_ankle" => self.damping[2] = v,
            "stance_height" => self.stance_height = v,
            _ => return Err(Error::Config(format!("model.params.{key}: unknown crouching_leg parameter"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CrouchingLeg<T: Real> {
    params: CrouchingLegParams<T>,
    constraints: Vec<HolonomicConstraint<T>>,
}

struct Kin<T: Real> {
    hip: PointKin<T>,
    torso: PointKin<T>,
    thigh: PointKin<T>,
    shin: PointKin<T>,
    ankle: PointKin<T>,
    torso_angle: Angle<T>,
    thigh_angle: Angle<T>,
    shin_angle: Angle<T>,
    foot_angle: Angle<T>,
}

const N: usize = 6;

impl<T: Real> CrouchingLeg<T> {
    pub fn new(params: CrouchingLegParams<T>) -> Self {
        let contact = ContactGeometry {
            normal: 1,
            tangent_x: Some(0),
            tangent_y: None,
            moment_length: Some(2),
            moment_width: None,
            mu: params.mu,
            length: params.foot_length,
            width: params.foot_width,
        };
        CrouchingLeg {
            params,
            constraints: vec![HolonomicConstraint {
                label: "foot".into(),
                dim: 3,
                kind: ConstraintKind::Contact,
                contact: Some(contact),
            }],
        }
    }

    pub fn params(&self) -> &CrouchingLegParams<T> {
        &self.params
    }

    /// Joint angles placing the hip `height` above the ankle with the torso
    /// upright and the foot flat, knee bent forward.
    pub fn stance(&self, height: T) -> Result<DVector<T>> {
        let (l1, l2) = (self.params.thigh_length, self.params.shin_length);
        let c = (l1 * l1 + height * height - l2 * l2) / (T::lit(2.0) * l1 * height);
        if !(height > T::zero()) || c.abs() > T::one() {
            return Err(Error::arg(format!(
                "stance height {} is out of reach for the leg",
                height.as_f64()
            )));
        }
        let alpha = c.acos();
        let a1 = alpha;
        let a2 = (-(l1 * alpha.sin())).atan2(height - l1 * alpha.cos());
        Ok(DVector::from_vec(vec![T::zero(), height, T::zero(), a1, a2 - a1, -a2]))
    }

    fn kin(&self, q: &DVector<T>, qd: &DVector<T>) -> Kin<T> {
        let p = &self.params;
        let half = T::lit(0.5);
        let hip = PointKin::translating(N, 0, 1, q);
        let torso_angle = Angle::sum_of(&[2], q, qd);
        let thigh_angle = Angle::sum_of(&[2, 3], q, qd);
        let shin_angle = Angle::sum_of(&[2, 3, 4], q, qd);
        let foot_angle = Angle::sum_of(&[2, 3, 4, 5], q, qd);
        let torso = hip.segment(-p.torso_com, &torso_angle);
        let thigh = hip.segment(p.thigh_length * half, &thigh_angle);
        let knee = hip.segment(p.thigh_length, &thigh_angle);
        let shin = knee.segment(p.shin_length * half, &shin_angle);
        let ankle = knee.segment(p.shin_length, &shin_angle);
        Kin {
            hip,
            torso,
            thigh,
            shin,
            ankle,
            torso_angle,
            thigh_angle,
            shin_angle,
            foot_angle,
        }
    }

    fn bodies(&self, q: &DVector<T>, qd: &DVector<T>) -> Vec<Body<T>> {
        let p = &self.params;
        let k = self.kin(q, qd);
        let rod = |m: T, l: T| m * l * l / T::lit(12.0);
        vec![
            Body {
                mass: p.torso_mass,
                inertia: p.torso_inertia,
                com: k.torso,
                angle_row: k.torso_angle.row,
            },
            Body {
                mass: p.thigh_mass,
                inertia: rod(p.thigh_mass, p.thigh_length),
                com: k.thigh,
                angle_row: k.thigh_angle.row,
            },
            Body {
                mass: p.shin_mass,
                inertia: rod(p.shin_mass, p.shin_length),
                com: k.shin,
                angle_row: k.shin_angle.row,
            },
            Body {
                mass: p.foot_mass,
                inertia: rod(p.foot_mass, p.foot_length),
                com: k.ankle,
                angle_row: k.foot_angle.row,
            },
        ]
    }

    /// Total mass supported by the contact.
    pub fn total_mass(&self) -> T {
        let p = &self.params;
        p.torso_mass + p.thigh_mass + p.shin_mass + p.foot_mass
    }
}

impl<T: Real> RobotModel<T> for CrouchingLeg<T> {
    fn name(&self) -> &str {
        "crouching_leg"
    }

    fn n_q(&self) -> usize {
        N
    }

    fn n_u(&self) -> usize {
        3
    }

    fn mass_matrix(&self, q: &DVector<T>) -> DMatrix<T> {
        planar::mass_matrix(&self.bodies(q, &DVector::zeros(N)), N)
    }

    fn bias(&self, q: &DVector<T>, qd: &DVector<T>) -> DVector<T> {
        let mut h = planar::bias(&self.bodies(q, qd), N, self.params.gravity);
        for i in 0..3 {
            h[3 + i] += self.params.damping[i] * qd[3 + i];
        }
        h
    }

    fn actuation(&self) -> DMatrix<T> {
        let mut b = DMatrix::zeros(N, 3);
        for i in 0..3 {
            b[(3 + i, i)] = T::one();
        }
        b
    }

    fn constraints(&self) -> &[HolonomicConstraint<T>] {
        &self.constraints
    }

    fn constraint_value(&self, _index: usize, q: &DVector<T>) -> DVector<T> {
        let k = self.kin(q, &DVector::zeros(N));
        DVector::from_vec(vec![k.ankle.pos.x, k.ankle.pos.y, k.foot_angle.value])
    }

    fn constraint_jacobian(&self, _index: usize, q: &DVector<T>) -> DMatrix<T> {
        let k = self.kin(q, &DVector::zeros(N));
        let mut j = DMatrix::zeros(3, N);
        j.view_mut((0, 0), (2, N)).copy_from(&k.ankle.jac);
        j.set_row(2, &k.foot_angle.row);
        j
    }

    fn constraint_bias(&self, _index: usize, q: &DVector<T>, qd: &DVector<T>) -> DVector<T> {
        let k = self.kin(q, qd);
        DVector::from_vec(vec![k.ankle.jdqd.x, k.ankle.jdqd.y, T::zero()])
    }

    fn torque_limits(&self) -> Vec<(T, T)> {
        vec![(-self.params.torque_limit, self.params.torque_limit); 3]
    }

    fn energy(&self, q: &DVector<T>, qd: &DVector<T>) -> T {
        let bodies = self.bodies(q, qd);
        planar::kinetic_energy(&bodies, qd) + planar::potential_energy(&bodies, self.params.gravity)
    }

    fn is_conservative(&self) -> bool {
        self.params.damping.iter().all(|d| *d == T::zero())
    }

    fn default_configuration(&self) -> DVector<T> {
        self.stance(self.params.stance_height)
            .unwrap_or_else(|_| DVector::zeros(N))
    }

    fn task_names(&self) -> Vec<&'static str> {
        vec!["leg_length", "hip_x", "hip_z", "torso_com_x", "torso_com_z"]
    }

    fn task(&self, name: &str, q: &DVector<T>, qd: &DVector<T>) -> Option<TaskKinematics<T>> {
        let k = self.kin(q, qd);
        match name {
            "leg_length" => Some(planar::distance_task(&k.hip, &k.ankle, qd)),
            "hip_x" => Some(planar::point_task(&k.hip, 0)),
            "hip_z" => Some(planar::point_task(&k.hip, 1)),
            "torso_com_x" => Some(planar::point_task(&k.torso, 0)),
            "torso_com_z" => Some(planar::point_task(&k.torso, 1)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{eval_dynamics, forward_dynamics, solve_constraint_forces};
    use crate::linalg;
    use approx::assert_relative_eq;

    #[test]
    fn stance_places_ankle_at_origin_with_flat_foot() {
        let m = CrouchingLeg::<f64>::new(CrouchingLegParams::default());
        for h in [0.5, 0.7, 0.9] {
            let q = m.stance(h).unwrap();
            let c = m.constraint_value(0, &q);
            assert!(c.amax() < 1e-12, "h = {h}: {c}");
            assert_relative_eq!(q[1], h);
        }
        assert!(m.stance(1.2).is_err());
    }

    #[test]
    fn holding_torques_leave_the_leg_at_rest() {
        let m = CrouchingLeg::<f64>::new(CrouchingLegParams::default());
        let q = m.default_configuration();
        let qd = DVector::zeros(6);
        let t = eval_dynamics(&m, &q, &qd).unwrap();
        // Static balance: B u + Jᵀ λ = H with the contact carrying all weight.
        let mut a = DMatrix::zeros(6, 6);
        a.view_mut((0, 0), (6, 3)).copy_from(&t.actuation);
        a.view_mut((0, 3), (6, 3)).copy_from(&t.jacobian.transpose());
        let sol = linalg::solve_vec(&a, &t.bias, "static balance").unwrap();
        let u = sol.rows(0, 3).into_owned();
        let lam = sol.rows(3, 3).into_owned();
        assert_relative_eq!(lam[1], m.total_mass() * 9.81, epsilon = 1e-9);
        let explicit = solve_constraint_forces(&m, &q, &qd, &u).unwrap();
        assert!((explicit - &lam).amax() < 1e-9);
        let (qdd, _) = forward_dynamics(&t, &u, None).unwrap();
        assert!(qdd.amax() < 1e-9);
        let r = &t.jacobian * &qdd + &t.jdot_qdot;
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn leg_length_task_matches_geometry() {
        let m = CrouchingLeg::<f64>::new(CrouchingLegParams::default());
        let q = m.stance(0.7).unwrap();
        let t = m.task("leg_length", &q, &DVector::zeros(6)).unwrap();
        assert_relative_eq!(t.value, 0.7, epsilon = 1e-12);
        assert_eq!(t.jdot_qdot, 0.0);
    }

    #[test]
    fn leg_length_task_derivatives_match_finite_differences() {
        let m = CrouchingLeg::<f64>::new(CrouchingLegParams::default());
        let q = m.stance(0.75).unwrap() + DVector::from_vec(vec![0.01, 0.0, 0.05, -0.1, 0.1, 0.02]);
        let qd = DVector::from_vec(vec![0.2, -0.3, 0.4, 0.1, -0.5, 0.3]);
        let h = 1e-6;
        let t = m.task("leg_length", &q, &qd).unwrap();
        let vp = m.task("leg_length", &(&q + &qd * h), &qd).unwrap();
        let vm = m.task("leg_length", &(&q - &qd * h), &qd).unwrap();
        let rate_fd = (vp.value - vm.value) / (2.0 * h);
        assert_relative_eq!(rate_fd, (&t.jacobian * &qd)[0], epsilon = 1e-8);
        let acc_fd = ((&vp.jacobian * &qd)[0] - (&vm.jacobian * &qd)[0]) / (2.0 * h);
        assert_relative_eq!(acc_fd, t.jdot_qdot, epsilon = 1e-6);
    }
}
