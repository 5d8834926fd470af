use clfqp::dynamics::{
    eval_dynamics, finite_diff_check, forward_dynamics, vector_fields, CrouchingLeg, CrouchingLegParams, DoublePendulum,
    DoublePendulumParams, LambdaMode, RobotModel,
};
use clfqp::qp::{read_dump, write_dump, QpSolver, QpStatus};
use clfqp::verify::{enumerate_qp, random_qp};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leg_state(offsets: &[f64], rates: &[f64]) -> (CrouchingLeg<f64>, DVector<f64>, DVector<f64>) {
    let leg = CrouchingLeg::new(CrouchingLegParams::default());
    let q = leg.default_configuration() + DVector::from_column_slice(offsets);
    (leg, q, DVector::from_column_slice(rates))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_matches_the_enumeration_oracle(seed in any::<u64>(), n in 2usize..10, m_in in 0usize..10, m_eq in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qp(&mut rng, n, m_in, m_eq);
        let (x_ref, best) = enumerate_qp(&p).unwrap();
        let s = QpSolver::new().solve(&p, None).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        prop_assert!((s.objective - best).abs() <= 1e-8 * (1.0 + best.abs()));
        prop_assert!((&s.x - &x_ref).amax() < 1e-6);
        prop_assert!(s.kkt.max() < 1e-8);
    }

    #[test]
    fn warm_start_from_the_optimum_reproduces_it(seed in any::<u64>(), n in 2usize..10, m_in in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qp(&mut rng, n, m_in, 1);
        let cold = QpSolver::new().solve(&p, None).unwrap();
        let warm = QpSolver::new().solve(&p, Some(&cold.active_set)).unwrap();
        prop_assert_eq!(warm.status, QpStatus::Optimal);
        prop_assert!((&warm.x - &cold.x).amax() < 1e-9);
        prop_assert_eq!(warm.iterations, 0);
    }

    #[test]
    fn dump_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..8, m_in in 0usize..6, m_eq in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_qp(&mut rng, n, m_in, m_eq);
        let mut buf = Vec::new();
        write_dump(&p, &mut buf).unwrap();
        let back = read_dump::<f64, _>(buf.as_slice()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn eliminated_forces_match_the_joint_kkt_solve(
        dq in prop::collection::vec(-0.1..0.1f64, 6),
        qd in prop::collection::vec(-1.0..1.0f64, 6),
        u in prop::collection::vec(-50.0..50.0f64, 3),
    ) {
        let (leg, q, qd) = leg_state(&dq, &qd);
        let u = DVector::from_vec(u);
        let t = eval_dynamics(&leg as &dyn RobotModel<f64>, &q, &qd).unwrap();
        // [D −Jᵀ; J 0] (q̈, λ) = (B u − H, −J̇ q̇)
        let mut k = DMatrix::zeros(9, 9);
        k.view_mut((0, 0), (6, 6)).copy_from(&t.mass);
        k.view_mut((0, 6), (6, 3)).copy_from(&(-t.jacobian.transpose()));
        k.view_mut((6, 0), (3, 6)).copy_from(&t.jacobian);
        let mut rhs = DVector::zeros(9);
        rhs.rows_mut(0, 6).copy_from(&(&t.actuation * &u - &t.bias));
        rhs.rows_mut(6, 3).copy_from(&(-&t.jdot_qdot));
        let sol = k.lu().solve(&rhs).unwrap();
        let (qdd, lambda) = forward_dynamics(&t, &u, None).unwrap();
        prop_assert!((&qdd - sol.rows(0, 6)).amax() < 1e-8 * (1.0 + qdd.amax()));
        prop_assert!((&lambda - sol.rows(6, 3)).amax() < 1e-8 * (1.0 + lambda.amax()));
    }

    #[test]
    fn vector_fields_reproduce_forward_dynamics(
        dq in prop::collection::vec(-0.1..0.1f64, 6),
        qd in prop::collection::vec(-1.0..1.0f64, 6),
        u in prop::collection::vec(-50.0..50.0f64, 3),
    ) {
        let (leg, q, qd) = leg_state(&dq, &qd);
        let u = DVector::from_vec(u);
        let fields = vector_fields(&leg as &dyn RobotModel<f64>, &q, &qd, LambdaMode::Eliminate).unwrap();
        let xdot = &fields.f + &fields.g * &u;
        let t = eval_dynamics(&leg as &dyn RobotModel<f64>, &q, &qd).unwrap();
        let (qdd, lambda) = forward_dynamics(&t, &u, None).unwrap();
        prop_assert!((xdot.rows(0, 6) - &qd).amax() == 0.0);
        prop_assert!((xdot.rows(6, 6) - &qdd).amax() < 1e-9 * (1.0 + qdd.amax()));
        prop_assert!((fields.forces.eval(&u) - lambda).amax() < 1e-9 * (1.0 + qdd.amax()));
    }

    #[test]
    fn constraint_derivatives_match_finite_differences(
        q in prop::collection::vec(-1.0..1.0f64, 4),
        qd in prop::collection::vec(-1.0..1.0f64, 4),
    ) {
        let pinned = DoublePendulum::new(DoublePendulumParams { pinned_base: true, ..Default::default() });
        let r = finite_diff_check(&pinned as &dyn RobotModel<f64>, &DVector::from_vec(q), &DVector::from_vec(qd), 1e-6).unwrap();
        prop_assert!(r.max_error() < 1e-6);
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite(dq in prop::collection::vec(-0.3..0.3f64, 6)) {
        let (leg, q, _) = leg_state(&dq, &[0.0; 6]);
        let d = leg.mass_matrix(&q);
        prop_assert!((&d - d.transpose()).amax() < 1e-12);
        prop_assert!(d.symmetric_eigenvalues().min() > 0.0);
    }
}
