//! Planar kinematic building blocks and Lagrangian assembly.
//!
//! Bodies are described by the position of their centre of mass and their
//! absolute angle, both as explicit functions of `q`. With point velocities
//! `v_i = J_i q̇` the manipulator terms are
//!
//! ```text
//! D = Σ m_i J_iᵀ J_i + I_i c_iᵀ c_i
//! H = Σ m_i J_iᵀ (J̇_i q̇) + ∂V/∂q + F q̇
//! ```
//!
//! where `c_i` is the (constant) row mapping `q̇` to the body's angular rate.

use nalgebra::{DMatrix, DVector, RowDVector, Vector2};

use super::TaskKinematics;
use crate::Real;

/// Unit direction of a link at absolute angle `a`, measured from straight
/// down: `(sin a, −cos a)`.
fn down<T: Real>(a: T) -> Vector2<T> {
    Vector2::new(a.sin(), -a.cos())
}

fn down_prime<T: Real>(a: T) -> Vector2<T> {
    Vector2::new(a.cos(), a.sin())
}

/// An absolute angle that is affine in `q`: `offset + row·q`.
#[derive(Debug, Clone)]
pub struct Angle<T: Real> {
    pub value: T,
    pub rate: T,
    pub row: RowDVector<T>,
}

impl<T: Real> Angle<T> {
    pub fn affine(offset: T, row: RowDVector<T>, q: &DVector<T>, qd: &DVector<T>) -> Self {
        Angle {
            value: offset + (&row * q)[0],
            rate: (&row * qd)[0],
            row,
        }
    }

    /// Angle equal to the sum of the listed coordinates.
    pub fn sum_of(indices: &[usize], q: &DVector<T>, qd: &DVector<T>) -> Self {
        let mut row = RowDVector::zeros(q.len());
        for &i in indices {
            row[i] = T::one();
        }
        Self::affine(T::zero(), row, q, qd)
    }
}

/// Position, Jacobian and `J̇q̇` of a point in the plane.
#[derive(Debug, Clone)]
pub struct PointKin<T: Real> {
    pub pos: Vector2<T>,
    pub jac: DMatrix<T>,
    pub jdqd: Vector2<T>,
}

impl<T: Real> PointKin<T> {
    pub fn fixed(n: usize, at: Vector2<T>) -> Self {
        PointKin {
            pos: at,
            jac: DMatrix::zeros(2, n),
            jdqd: Vector2::zeros(),
        }
    }

    /// A point whose coordinates are `(q[ix], q[iz])`.
    pub fn translating(n: usize, ix: usize, iz: usize, q: &DVector<T>) -> Self {
        let mut jac = DMatrix::zeros(2, n);
        jac[(0, ix)] = T::one();
        jac[(1, iz)] = T::one();
        PointKin {
            pos: Vector2::new(q[ix], q[iz]),
            jac,
            jdqd: Vector2::zeros(),
        }
    }

    /// Moves along a rigid segment of signed length `len` at `angle`.
    pub fn segment(&self, len: T, angle: &Angle<T>) -> Self {
        let d = down_prime(angle.value) * len;
        let mut jac = self.jac.clone();
        for j in 0..jac.ncols() {
            let c = angle.row[j];
            if c != T::zero() {
                jac[(0, j)] += d.x * c;
                jac[(1, j)] += d.y * c;
            }
        }
        PointKin {
            pos: self.pos + down(angle.value) * len,
            jac,
            jdqd: self.jdqd - down(angle.value) * (len * angle.rate * angle.rate),
        }
    }

    pub fn velocity(&self, qd: &DVector<T>) -> Vector2<T> {
        let v = &self.jac * qd;
        Vector2::new(v[0], v[1])
    }
}

/// A rigid body: mass at a point plus rotational inertia about that point.
#[derive(Debug, Clone)]
pub struct Body<T: Real> {
    pub mass: T,
    pub inertia: T,
    pub com: PointKin<T>,
    pub angle_row: RowDVector<T>,
}

pub fn mass_matrix<T: Real>(bodies: &[Body<T>], n: usize) -> DMatrix<T> {
    let mut d = DMatrix::zeros(n, n);
    for b in bodies {
        d += b.com.jac.transpose() * &b.com.jac * b.mass;
        if b.inertia != T::zero() {
            d += b.angle_row.transpose() * &b.angle_row * b.inertia;
        }
    }
    d
}

/// Coriolis, centripetal and gravity terms; gravity acts along −z.
pub fn bias<T: Real>(bodies: &[Body<T>], n: usize, gravity: T) -> DVector<T> {
    let mut h = DVector::zeros(n);
    for b in bodies {
        let acc = Vector2::new(b.com.jdqd.x, b.com.jdqd.y + gravity);
        h += b.com.jac.transpose() * DVector::from_column_slice(acc.as_slice()) * b.mass;
    }
    h
}

pub fn kinetic_energy<T: Real>(bodies: &[Body<T>], qd: &DVector<T>) -> T {
    let half = T::lit(0.5);
    bodies.iter().fold(T::zero(), |acc, b| {
        let v = b.com.velocity(qd);
        let w = (&b.angle_row * qd)[0];
        acc + half * b.mass * v.norm_squared() + half * b.inertia * w * w
    })
}

pub fn potential_energy<T: Real>(bodies: &[Body<T>], gravity: T) -> T {
    bodies
        .iter()
        .fold(T::zero(), |acc, b| acc + b.mass * gravity * b.com.pos.y)
}

/// One Cartesian component (`axis` 0 = x, 1 = z) of a point as a task.
pub fn point_task<T: Real>(p: &PointKin<T>, axis: usize) -> TaskKinematics<T> {
    TaskKinematics {
        value: p.pos[axis],
        jacobian: p.jac.row(axis).into_owned(),
        jdot_qdot: p.jdqd[axis],
    }
}

/// Euclidean distance between two points as a task.
pub fn distance_task<T: Real>(a: &PointKin<T>, b: &PointKin<T>, qd: &DVector<T>) -> TaskKinematics<T> {
    let r = a.pos - b.pos;
    let dist = r.norm();
    let jr = &a.jac - &b.jac;
    let rd = a.velocity(qd) - b.velocity(qd);
    let rdd = a.jdqd - b.jdqd;
    let unit = RowDVector::from_row_slice(&[r.x / dist, r.y / dist]);
    let along = r.dot(&rd);
    TaskKinematics {
        value: dist,
        jacobian: &unit * jr,
        jdot_qdot: (rd.norm_squared() + r.dot(&rdd)) / dist - along * along / (dist * dist * dist),
    }
}
