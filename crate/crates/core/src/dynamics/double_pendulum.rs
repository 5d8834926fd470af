use nalgebra::{DMatrix, DVector, RowDVector, Vector2};

use super::planar::{self, Angle, Body, PointKin};
use super::{ConstraintKind, HolonomicConstraint, RobotModel, TaskKinematics};
use crate::{Error, Real, Result};

/// Parameters of the two-link point-mass pendulum. Angles are relative and
/// measured from hanging straight down.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublePendulumParams<T: Real> {
    pub mass1: T,
    pub mass2: T,
    pub length1: T,
    pub length2: T,
    pub gravity: T,
    /// Viscous joint damping (N·m·s/rad).
    pub damping: [T; 2],
    pub torque_limit: T,
    /// Mount the pivot on a free planar base held by a pin constraint.
    pub pinned_base: bool,
    pub base_mass: T,
}

impl<T: Real> Default for DoublePendulumParams<T> {
    fn default() -> Self {
        DoublePendulumParams {
            mass1: T::one(),
            mass2: T::one(),
            length1: T::one(),
            length2: T::one(),
            gravity: T::lit(9.81),
            damping: [T::zero(); 2],
            torque_limit: T::lit(100.0),
            pinned_base: false,
            base_mass: T::one(),
        }
    }
}

impl<T: Real> DoublePendulumParams<T> {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let v = T::lit(value);
        match key {
            "mass1" => self.mass1 = v,
            "mass2" => self.mass2 = v,
            "length1" => self.length1 = v,
            "length2" => self.length2 = v,
            "gravity" => self.gravity = v,
            "damping1" => self.damping[0] = v,
            "damping2" => self.damping[1] = v,
            "torque_limit" => self.torque_limit = v,
            "base_mass" => self.base_mass = v,
            "pinned_base" => self.pinned_base = value != 0.0,
            _ => return Err(Error::Config(format!("model.params.{key}: unknown double_pendulum parameter"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DoublePendulum<T: Real> {
    params: DoublePendulumParams<T>,
    constraints: Vec<HolonomicConstraint<T>>,
}

struct Kin<T: Real> {
    base: PointKin<T>,
    elbow: PointKin<T>,
    tip: PointKin<T>,
}

impl<T: Real> DoublePendulum<T> {
    pub fn new(params: DoublePendulumParams<T>) -> Self {
        let constraints = if params.pinned_base {
            vec![HolonomicConstraint {
                label: "pin".into(),
                dim: 2,
                kind: ConstraintKind::Internal,
                contact: None,
            }]
        } else {
            Vec::new()
        };
        DoublePendulum { params, constraints }
    }

    pub fn params(&self) -> &DoublePendulumParams<T> {
        &self.params
    }

    fn joint0(&self) -> usize {
        if self.params.pinned_base {
            2
        } else {
            0
        }
    }

    fn kin(&self, q: &DVector<T>, qd: &DVector<T>) -> Kin<T> {
        let n = self.n_q();
        let j = self.joint0();
        let base = if self.params.pinned_base {
            PointKin::translating(n, 0, 1, q)
        } else {
            PointKin::fixed(n, Vector2::zeros())
        };
        let a1 = Angle::sum_of(&[j], q, qd);
        let a2 = Angle::sum_of(&[j, j + 1], q, qd);
        let elbow = base.segment(self.params.length1, &a1);
        let tip = elbow.segment(self.params.length2, &a2);
        Kin { base, elbow, tip }
    }

    fn bodies(&self, q: &DVector<T>, qd: &DVector<T>) -> Vec<Body<T>> {
        let n = self.n_q();
        let k = self.kin(q, qd);
        let mut out = vec![
            Body {
                mass: self.params.mass1,
                inertia: T::zero(),
                com: k.elbow,
                angle_row: RowDVector::zeros(n),
            },
            Body {
                mass: self.params.mass2,
                inertia: T::zero(),
                com: k.tip,
                angle_row: RowDVector::zeros(n),
            },
        ];
        if self.params.pinned_base {
            out.push(Body {
                mass: self.params.base_mass,
                inertia: T::zero(),
                com: k.base,
                angle_row: RowDVector::zeros(n),
            });
        }
        out
    }
}

impl<T: Real> RobotModel<T> for DoublePendulum<T> {
    fn name(&self) -> &str {
        "double_pendulum"
    }

    fn n_q(&self) -> usize {
        if self.params.pinned_base {
            4
        } else {
            2
        }
    }

    fn n_u(&self) -> usize {
        2
    }

    fn mass_matrix(&self, q: &DVector<T>) -> DMatrix<T> {
        let qd = DVector::zeros(self.n_q());
        planar::mass_matrix(&self.bodies(q, &qd), self.n_q())
    }

    fn bias(&self, q: &DVector<T>, qd: &DVector<T>) -> DVector<T> {
        let mut h = planar::bias(&self.bodies(q, qd), self.n_q(), self.params.gravity);
        let j = self.joint0();
        for i in 0..2 {
            h[j + i] += self.params.damping[i] * qd[j + i];
        }
        h
    }

    fn actuation(&self) -> DMatrix<T> {
        let mut b = DMatrix::zeros(self.n_q(), 2);
        let j = self.joint0();
        b[(j, 0)] = T::one();
        b[(j + 1, 1)] = T::one();
        b
    }

    fn constraints(&self) -> &[HolonomicConstraint<T>] {
        &self.constraints
    }

    fn constraint_value(&self, _index: usize, q: &DVector<T>) -> DVector<T> {
        DVector::from_vec(vec![q[0], q[1]])
    }

    fn constraint_jacobian(&self, _index: usize, _q: &DVector<T>) -> DMatrix<T> {
        let mut j = DMatrix::zeros(2, self.n_q());
        j[(0, 0)] = T::one();
        j[(1, 1)] = T::one();
        j
    }

    fn constraint_bias(&self, _index: usize, _q: &DVector<T>, _qd: &DVector<T>) -> DVector<T> {
        DVector::zeros(2)
    }

    fn torque_limits(&self) -> Vec<(T, T)> {
        vec![(-self.params.torque_limit, self.params.torque_limit); 2]
    }

    fn energy(&self, q: &DVector<T>, qd: &DVector<T>) -> T {
        let bodies = self.bodies(q, qd);
        planar::kinetic_energy(&bodies, qd) + planar::potential_energy(&bodies, self.params.gravity)
    }

    fn is_conservative(&self) -> bool {
        self.params.damping.iter().all(|d| *d == T::zero())
    }

    fn default_configuration(&self) -> DVector<T> {
        DVector::zeros(self.n_q())
    }

    fn task_names(&self) -> Vec<&'static str> {
        vec!["tip_x", "tip_z", "elbow_x", "elbow_z"]
    }

    fn task(&self, name: &str, q: &DVector<T>, qd: &DVector<T>) -> Option<TaskKinematics<T>> {
        let k = self.kin(q, qd);
        match name {
            "tip_x" => Some(planar::point_task(&k.tip, 0)),
            "tip_z" => Some(planar::point_task(&k.tip, 1)),
            "elbow_x" => Some(planar::point_task(&k.elbow, 0)),
            "elbow_z" => Some(planar::point_task(&k.elbow, 1)),
            _ => None,
        }
    }
}
