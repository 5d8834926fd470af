use nalgebra::{DMatrix, DVector, RowDVector};

use super::planar::{self, Angle, Body, PointKin};
use super::{HolonomicConstraint, RobotModel, TaskKinematics};
use crate::{Error, Real, Result};

/// Cart on a rail with a point-mass pole; `q = (x, θ)` with `θ = 0` upright.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleParams<T: Real> {
    pub cart_mass: T,
    pub pole_mass: T,
    pub pole_length: T,
    pub gravity: T,
    /// Viscous damping on the rail and at the hinge.
    pub damping: [T; 2],
    /// Bound on the horizontal cart force (N).
    pub force_limit: T,
}

impl<T: Real> Default for CartPoleParams<T> {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: T::one(),
            pole_mass: T::lit(0.2),
            pole_length: T::lit(0.5),
            gravity: T::lit(9.81),
            damping: [T::zero(); 2],
            force_limit: T::lit(50.0),
        }
    }
}

impl<T: Real> CartPoleParams<T> {
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        let v = T::lit(value);
        match key {
            "cart_mass" => self.cart_mass = v,
            "pole_mass" => self.pole_mass = v,
            "pole_length" => self.pole_length = v,
            "gravity" => self.gravity = v,
            "damping_cart" => self.damping[0] = v,
            "damping_pole" => self.damping[1] = v,
            "force_limit" => self.force_limit = v,
            _ => return Err(Error::Config(format!("model.params.{key}: unknown cart_pole parameter"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CartPole<T: Real> {
    params: CartPoleParams<T>,
}

impl<T: Real> CartPole<T> {
    pub fn new(params: CartPoleParams<T>) -> Self {
        CartPole { params }
    }

    pub fn params(&self) -> &CartPoleParams<T> {
        &self.params
    }

    fn points(&self, q: &DVector<T>, qd: &DVector<T>) -> (PointKin<T>, PointKin<T>) {
        let mut zero_z = q.clone();
        zero_z[1] = T::zero();
        // The cart is a translating point whose z coordinate is pinned at 0.
        let mut cart = PointKin::translating(2, 0, 1, &zero_z);
        cart.jac[(1, 1)] = T::zero();
        cart.pos.y = T::zero();
        let angle = Angle::affine(T::pi(), RowDVector::from_row_slice(&[T::zero(), -T::one()]), q, qd);
        let pole = cart.segment(self.params.pole_length, &angle);
        (cart, pole)
    }

    fn bodies(&self, q: &DVector<T>, qd: &DVector<T>) -> Vec<Body<T>> {
        let (cart, pole) = self.points(q, qd);
        vec![
            Body {
                mass: self.params.cart_mass,
                inertia: T::zero(),
                com: cart,
                angle_row: RowDVector::zeros(2),
            },
            Body {
                mass: self.params.pole_mass,
                inertia: T::zero(),
                com: pole,
                angle_row: RowDVector::zeros(2),
            },
        ]
    }
}

impl<T: Real> RobotModel<T> for CartPole<T> {
    fn name(&self) -> &str {
        "cart_pole"
    }

    fn n_q(&self) -> usize {
        2
    }

    fn n_u(&self) -> usize {
        1
    }

    fn mass_matrix(&self, q: &DVector<T>) -> DMatrix<T> {
        planar::mass_matrix(&self.bodies(q, &DVector::zeros(2)), 2)
    }

    fn bias(&self, q: &DVector<T>, qd: &DVector<T>) -> DVector<T> {
        let mut h = planar::bias(&self.bodies(q, qd), 2, self.params.gravity);
        for i in 0..2 {
            h[i] += self.params.damping[i] * qd[i];
        }
        h
    }

    fn actuation(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(2, 1, &[T::one(), T::zero()])
    }

    fn constraints(&self) -> &[HolonomicConstraint<T>] {
        &[]
    }

    fn constraint_value(&self, _index: usize, _q: &DVector<T>) -> DVector<T> {
        DVector::zeros(0)
    }

    fn constraint_jacobian(&self, _index: usize, _q: &DVector<T>) -> DMatrix<T> {
        DMatrix::zeros(0, 2)
    }

    fn constraint_bias(&self, _index: usize, _q: &DVector<T>, _qd: &DVector<T>) -> DVector<T> {
        DVector::zeros(0)
    }

    fn torque_limits(&self) -> Vec<(T, T)> {
        vec![(-self.params.force_limit, self.params.force_limit)]
    }

    fn energy(&self, q: &DVector<T>, qd: &DVector<T>) -> T {
        let bodies = self.bodies(q, qd);
        planar::kinetic_energy(&bodies, qd) + planar::potential_energy(&bodies, self.params.gravity)
    }

    fn is_conservative(&self) -> bool {
        self.params.damping.iter().all(|d| *d == T::zero())
    }

    fn default_configuration(&self) -> DVector<T> {
        DVector::zeros(2)
    }

    fn task_names(&self) -> Vec<&'static str> {
        vec!["pole_x", "pole_z"]
    }

    fn task(&self, name: &str, q: &DVector<T>, qd: &DVector<T>) -> Option<TaskKinematics<T>> {
        let (_, pole) = self.points(q, qd);
        match name {
            "pole_x" => Some(planar::point_task(&pole, 0)),
            "pole_z" => Some(planar::point_task(&pole, 1)),
            _ => None,
        }
    }
}
