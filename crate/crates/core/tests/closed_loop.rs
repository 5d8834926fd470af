mod common;

use clfqp::controllers::Variant;
use clfqp::resclf::{OutputDynamics, ResClf};
use clfqp::sim::{run, Perturbation};
use nalgebra::{DMatrix, DVector};

fn offset(q: [f64; 2]) -> Option<Perturbation<f64>> {
    Some(Perturbation {
        q: DVector::from_vec(q.to_vec()),
        qd: DVector::zeros(2),
    })
}

#[test]
fn feedback_linearized_outputs_follow_the_scaled_pd_dynamics() {
    let eps = 0.5;
    let mut cfg = common::pendulum(Variant::Fbl, eps, None, false);
    cfg.dt = 1e-5;
    cfg.control_period = cfg.dt;
    cfg.duration = 0.3;
    cfg.controller.torque_limits = false;
    cfg.perturbation = offset([0.2, -0.1]);
    let g = cfg.clf.gains();
    let r = run(&cfg).unwrap();
    assert!(r.failure.is_none());
    let h = cfg.dt;
    let mut worst: f64 = 0.0;
    for k in 1..r.rows.len() - 1 {
        let y = r.rows[k].eta.rows(0, 2).into_owned();
        let yd = r.rows[k].eta.rows(2, 2).into_owned();
        let ydd = (r.rows[k + 1].eta.rows(2, 2) - r.rows[k - 1].eta.rows(2, 2)) / (2.0 * h);
        let expected = -(&g.proportional * &y) / (eps * eps) - (&g.derivative * &yd) / eps;
        worst = worst.max((ydd - expected).amax());
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn smaller_epsilon_converges_strictly_sooner() {
    let converge = |eps: f64| {
        let mut cfg = common::pendulum(Variant::Fbl, eps, None, false);
        cfg.duration = 6.0;
        cfg.perturbation = offset([0.3, -0.2]);
        run(&cfg).unwrap().summary.time_to_converge.expect("converges")
    };
    let (slow, fast) = (converge(1.0), converge(0.5));
    assert!(fast < slow, "{fast} vs {slow}");
}

#[test]
fn linear_output_dynamics_respect_the_exponential_bound() {
    for (m1, m2) in [(0, 1), (1, 1), (0, 3), (2, 2)] {
        let d = OutputDynamics::<f64>::new(m1, m2).unwrap();
        let n = d.dim();
        for eps in [1.0, 0.5, 0.25] {
            let clf = ResClf::new(d.clone(), DMatrix::identity(n, n), eps).unwrap();
            // η̇ = (F − G GᵀP_ε / ε) η
            let closed = &d.f - &d.g * d.g.transpose() * clf.p_eps() / eps;
            let eta0 = DVector::from_fn(n, |i, _| 1.0 - 0.3 * i as f64);
            let v0 = clf.value(&eta0);
            for k in 1..=200 {
                let t = 0.01 * k as f64;
                let eta = (&closed * t).exp() * &eta0;
                let bound = v0 * (-clf.gamma() * t).exp() * (1.0 + 1e-6);
                assert!(clf.value(&eta) <= bound, "m = ({m1}, {m2}), ε = {eps}, t = {t}");
            }
        }
    }
}

#[test]
fn crouch_keeps_every_constraint_on_optimal_ticks() {
    let mut cfg = common::crouch(Variant::IdClfQpPlus, true);
    cfg.duration = 1.0;
    let r = run(&cfg).unwrap();
    let s = &r.summary;
    assert!(r.failure.is_none());
    assert_eq!(s.flagged_ticks, 0);
    assert!(s.max_dynamics_residual < 1e-8);
    assert!(s.max_pyramid_violation < 1e-8);
    assert_eq!(s.max_torque_violation, 0.0);
    assert!(s.max_holonomic_velocity < 1e-5);
    assert!(s.all_finite);
}
