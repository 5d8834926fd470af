//! Optimization-based whole-body controllers for planar rigid-body models.
//!
//! The crate covers the full pipeline from model evaluation to closed-loop
//! simulation:
//!
//! - [`dynamics`]: manipulator equations `D(q)q̈ + H(q,q̇) = Bu + Jᵀλ`, holonomic
//!   constraints and three built-in planar models.
//! - [`outputs`]: relative-degree-1 and -2 tracking outputs, desired splines and
//!   the phase variable τ.
//! - [`resclf`]: CARE solve (Newton–Kleinman / Bartels–Stewart) and the
//!   ε-scaled rapidly exponentially stabilizing CLF.
//! - [`qp`]: a dense dual active-set QP solver with KKT diagnostics.
//! - [`controllers`]: feedback linearization, CLF-QP, ID-QP and the
//!   inverse-dynamics CLF-QP family over `𝒳 = (q̈, u, λ[, δ])`.
//! - [`sim`]: fixed-step RK4 closed-loop simulation with zero-order hold.
//!
//! All numerics are generic over [`Real`]; `f64` aliases live at the crate
//! root.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod outputs;
pub mod qp;
pub mod resclf;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the whole crate is generic over (`f32` or `f64`).
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for non-representable values.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type DoublePendulum64 = dynamics::DoublePendulum<f64>;
pub type CartPole64 = dynamics::CartPole<f64>;
pub type CrouchingLeg64 = dynamics::CrouchingLeg<f64>;
pub type OutputSet64 = outputs::OutputSet<f64>;
pub type ResClf64 = resclf::ResClf<f64>;
pub type QpProblem64 = qp::QpProblem<f64>;
pub type QpSolution64 = qp::QpSolution<f64>;
pub type QpSolver64 = qp::QpSolver<f64>;
pub type ControllerSpec64 = controllers::ControllerSpec<f64>;
pub type ControlTick64 = controllers::ControlTick<f64>;
pub type SimConfig64 = sim::SimConfig<f64>;
pub type RunResult64 = sim::RunResult<f64>;
