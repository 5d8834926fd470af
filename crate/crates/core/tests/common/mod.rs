#![allow(dead_code)]

use std::sync::Arc;

use clfqp::controllers::{ControllerSpec, Variant};
use clfqp::dynamics::{CrouchingLeg, CrouchingLegParams, DoublePendulum, DoublePendulumParams, RobotModel};
use clfqp::outputs::{Output, OutputMap, OutputSet, Phase, Segment, Spline};
use clfqp::resclf::{OutputDynamics, ResClf};
use clfqp::sim::{Perturbation, SimConfig};
use nalgebra::{DMatrix, DVector};

pub fn pendulum_model() -> Arc<dyn RobotModel<f64>> {
    Arc::new(DoublePendulum::new(DoublePendulumParams::default()))
}

/// Joint-angle outputs of the double pendulum following a smooth swing.
pub fn pendulum_outputs(model: &dyn RobotModel<f64>, moving: bool) -> OutputSet<f64> {
    let desired = |to: f64| {
        if moving {
            Spline::single(Segment::Cosine { from: 0.0, to }).unwrap()
        } else {
            Spline::constant(0.0)
        }
    };
    let outs = vec![
        Output::new("shoulder", OutputMap::Coordinate(0), desired(0.8)),
        Output::new("elbow", OutputMap::Coordinate(1), desired(-0.6)),
    ];
    OutputSet::new(model, vec![], outs, Phase::Time { start: 0.0, end: 1.5 }).unwrap()
}

pub fn clf(m2: usize, eps: f64, gamma: Option<f64>) -> ResClf<f64> {
    let n = 2 * m2;
    let c = ResClf::new(OutputDynamics::new(0, m2).unwrap(), DMatrix::identity(n, n), eps).unwrap();
    match gamma {
        Some(g) => c.with_gamma(g).unwrap(),
        None => c,
    }
}

pub fn pendulum(variant: Variant, eps: f64, gamma: Option<f64>, moving: bool) -> SimConfig<f64> {
    let model = pendulum_model();
    let outputs = Arc::new(pendulum_outputs(model.as_ref(), moving));
    SimConfig::new(variant.name(), model, outputs, Arc::new(clf(2, eps, gamma)), ControllerSpec::new(variant))
}

pub fn crouch_model() -> Arc<dyn RobotModel<f64>> {
    Arc::new(CrouchingLeg::new(CrouchingLegParams::default()))
}

/// Hip held over the ankle, torso upright, hip height dipping 0.9 → 0.5 → 0.9 m.
pub fn crouch(variant: Variant, perturbed: bool) -> SimConfig<f64> {
    let model = crouch_model();
    let z = Spline::new(
        vec![0.0, 0.5, 1.0],
        vec![Segment::Cosine { from: 0.9, to: 0.5 }, Segment::Cosine { from: 0.5, to: 0.9 }],
    )
    .unwrap();
    let outs = vec![
        Output::new("hip_x", OutputMap::Task("hip_x".into()), Spline::constant(0.0)),
        Output::new("hip_z", OutputMap::Task("hip_z".into()), z),
        Output::new("torso", OutputMap::Coordinate(2), Spline::constant(0.0)),
    ];
    let os = OutputSet::new(model.as_ref(), vec![], outs, Phase::Time { start: 0.0, end: 4.0 }).unwrap();
    let mut c = SimConfig::new(variant.name(), model, Arc::new(os), Arc::new(clf(3, 0.2, Some(5.0))), ControllerSpec::new(variant));
    c.duration = 4.0;
    if perturbed {
        c.perturbation = Some(Perturbation {
            q: DVector::from_vec(vec![0.0, 0.0, 0.1, 0.05, -0.05, 0.0]),
            qd: DVector::zeros(6),
        });
    }
    c
}
