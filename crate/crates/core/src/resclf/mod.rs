//! Rapidly exponentially stabilizing control Lyapunov functions built on
//! the linear output dynamics
//!
//! ```text
//! η̇ = F η + G v,   η = (y₁, y₂, ẏ₂)
//! ```
//!
//! `V(η) = ηᵀ P_ε η` with `P_ε = I_ε P I_ε`, `I_ε = diag(I, I/ε, I)` and `P`
//! the CARE solution for weight `Q`.

pub mod care;

pub use care::{care_residual, solve_care_from, solve_lyapunov, CareSolution};

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::linalg;
use crate::{Error, Real, Result};

/// Block pattern of the linear output dynamics for `m₁` velocity and `m₂`
/// position outputs.
#[derive(Debug, Clone)]
pub struct OutputDynamics<T: Real> {
    pub m1: usize,
    pub m2: usize,
    pub f: DMatrix<T>,
    pub g: DMatrix<T>,
}

impl<T: Real> OutputDynamics<T> {
    pub fn new(m1: usize, m2: usize) -> Result<Self> {
        if m1 + m2 == 0 {
            return Err(Error::arg("output dynamics need at least one output"));
        }
        let n = m1 + 2 * m2;
        let mut f = DMatrix::zeros(n, n);
        let mut g = DMatrix::zeros(n, m1 + m2);
        for i in 0..m1 {
            g[(i, i)] = T::one();
        }
        for i in 0..m2 {
            f[(m1 + i, m1 + m2 + i)] = T::one();
            g[(m1 + m2 + i, m1 + i)] = T::one();
        }
        Ok(OutputDynamics { m1, m2, f, g })
    }

    pub fn dim(&self) -> usize {
        self.m1 + 2 * self.m2
    }

    /// Stabilizing gain from the decoupled per-output LQR closed forms,
    /// using the diagonal of `q`.
    pub fn initial_gain(&self, q: &DMatrix<T>) -> DMatrix<T> {
        let (m1, m2) = (self.m1, self.m2);
        let mut k = DMatrix::zeros(m1 + m2, self.dim());
        let two = T::lit(2.0);
        for i in 0..m1 {
            k[(i, i)] = q[(i, i)].max(T::default_epsilon()).sqrt();
        }
        for i in 0..m2 {
            let kp = q[(m1 + i, m1 + i)].max(T::default_epsilon()).sqrt();
            let qd = q[(m1 + m2 + i, m1 + m2 + i)].max(T::zero());
            k[(m1 + i, m1 + i)] = kp;
            k[(m1 + i, m1 + m2 + i)] = (qd + two * kp).sqrt();
        }
        k
    }

    /// Solves the CARE for this block pattern.
    pub fn solve_care(&self, q: &DMatrix<T>) -> Result<CareSolution<T>> {
        let n = self.dim();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::arg(format!("Q must be {n}×{n}, got {}×{}", q.nrows(), q.ncols())));
        }
        let (lo, _) = linalg::eigen_extremes(q);
        if !(lo > T::zero()) || linalg::max_abs(&(q - q.transpose())) > T::lit(1e-12) * (T::one() + linalg::max_abs(q)) {
            return Err(Error::arg("Q must be symmetric positive definite"));
        }
        solve_care_from(&self.f, &self.g, q, &self.initial_gain(q))
    }
}

/// PD-style gains read off `K = GᵀP`.
#[derive(Debug, Clone)]
pub struct FeedbackGains<T: Real> {
    pub velocity: DMatrix<T>,
    pub proportional: DMatrix<T>,
    pub derivative: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct ResClf<T: Real> {
    dynamics: OutputDynamics<T>,
    q: DMatrix<T>,
    p: DMatrix<T>,
    epsilon: T,
    p_eps: DMatrix<T>,
    certified_gamma: T,
    gamma: T,
    care_residual: T,
}

impl<T: Real> ResClf<T> {
    /// Solves the CARE for `q` and scales by `epsilon ∈ (0, 1]`.
    pub fn new(dynamics: OutputDynamics<T>, q: DMatrix<T>, epsilon: T) -> Result<Self> {
        let sol = dynamics.solve_care(&q)?;
        Self::from_care(dynamics, sol.p, q, epsilon)
    }

    /// Builds the CLF from a known CARE solution.
    pub fn from_care(dynamics: OutputDynamics<T>, p: DMatrix<T>, q: DMatrix<T>, epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon <= T::one()) {
            return Err(Error::arg(format!("epsilon must lie in (0, 1], got {}", epsilon.as_f64())));
        }
        let n = dynamics.dim();
        if p.nrows() != n || p.ncols() != n || q.nrows() != n || q.ncols() != n {
            return Err(Error::arg("P and Q must match the output dynamics dimension"));
        }
        let s = Self::scaling_matrix(&dynamics, epsilon);
        let p_eps = linalg::symmetrize(&(&s * &p * &s));
        let (q_lo, _) = linalg::eigen_extremes(&q);
        let (_, p_hi) = linalg::eigen_extremes(&p_eps);
        let gamma = q_lo / (epsilon * p_hi);
        let residual = care_residual(&dynamics.f, &dynamics.g, &q, &p);
        Ok(ResClf {
            dynamics,
            q,
            p,
            epsilon,
            p_eps,
            certified_gamma: gamma,
            gamma,
            care_residual: residual,
        })
    }

    fn scaling_matrix(d: &OutputDynamics<T>, epsilon: T) -> DMatrix<T> {
        let mut s = DMatrix::identity(d.dim(), d.dim());
        for i in 0..d.m2 {
            s[(d.m1 + i, d.m1 + i)] = T::one() / epsilon;
        }
        s
    }

    /// Replaces the rate used in convergence constraints.
    pub fn with_gamma(mut self, gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) || !gamma.is_finite_value() {
            return Err(Error::arg("gamma override must be positive and finite"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn dynamics(&self) -> &OutputDynamics<T> {
        &self.dynamics
    }

    pub fn p(&self) -> &DMatrix<T> {
        &self.p
    }

    pub fn p_eps(&self) -> &DMatrix<T> {
        &self.p_eps
    }

    pub fn q(&self) -> &DMatrix<T> {
        &self.q
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Rate used in constraints (the override when one was set).
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// `λ_min(Q) / (ε λ_max(P_ε))`.
    pub fn certified_gamma(&self) -> T {
        self.certified_gamma
    }

    pub fn care_residual(&self) -> T {
        self.care_residual
    }

    pub fn value(&self, eta: &DVector<T>) -> T {
        (eta.transpose() * &self.p_eps * eta)[0]
    }

    /// `(V, L_F V, L_G V)`.
    pub fn lyapunov_terms(&self, eta: &DVector<T>) -> (T, T, RowDVector<T>) {
        let pe = &self.p_eps * eta;
        let v = eta.dot(&pe);
        let lf = T::lit(2.0) * (&self.dynamics.f * eta).dot(&pe);
        let lg = (pe.transpose() * &self.dynamics.g) * T::lit(2.0);
        (v, lf, lg)
    }

    /// `V̇ = L_F V + L_G V v`.
    pub fn vdot(&self, eta: &DVector<T>, v: &DVector<T>) -> T {
        let (_, lf, lg) = self.lyapunov_terms(eta);
        lf + (lg * v)[0]
    }

    /// `K = GᵀP` split into velocity, proportional and derivative blocks.
    pub fn gains(&self) -> FeedbackGains<T> {
        let d = &self.dynamics;
        let k = d.g.transpose() * &self.p;
        FeedbackGains {
            velocity: k.view((0, 0), (d.m1, d.m1)).into_owned(),
            proportional: k.view((d.m1, d.m1), (d.m2, d.m2)).into_owned(),
            derivative: k.view((d.m1, d.m1 + d.m2), (d.m2, d.m2)).into_owned(),
        }
    }

    /// ε-scaled PD feedback
    /// `v = (−K_v̄ y₁/ε, −K_P y₂/ε² − K_D ẏ₂/ε)`, equal to `−GᵀP_ε η / ε`.
    pub fn feedback(&self, eta: &DVector<T>) -> DVector<T> {
        (self.dynamics.g.transpose() * &self.p_eps * eta) * (-T::one() / self.epsilon)
    }

    /// Unscaled LQR feedback `v = −GᵀP_ε η`.
    pub fn lqr_feedback(&self, eta: &DVector<T>) -> DVector<T> {
        -(self.dynamics.g.transpose() * &self.p_eps * eta)
    }

    /// Inequality `a·𝒳 ≤ b` imposing `V̇ ≤ −γV` through the output
    /// accelerations `J_y q̈ + J̇_y q̇`. `q̈` occupies the first `n_q` entries
    /// of the `n_x`-dimensional decision vector.
    pub fn convergence_constraint_row(
        &self,
        eta: &DVector<T>,
        jacobian: &DMatrix<T>,
        jdot_qdot: &DVector<T>,
        n_x: usize,
    ) -> (RowDVector<T>, T) {
        let (v, lf, lg) = self.lyapunov_terms(eta);
        let n_q = jacobian.ncols();
        let mut row = RowDVector::zeros(n_x);
        row.columns_mut(0, n_q).copy_from(&(&lg * jacobian));
        let b = -self.gamma * v - lf - (&lg * jdot_qdot)[0];
        (row, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn clf(m1: usize, m2: usize, eps: f64) -> ResClf<f64> {
        let d = OutputDynamics::new(m1, m2).unwrap();
        let n = d.dim();
        ResClf::new(d, DMatrix::identity(n, n), eps).unwrap()
    }

    #[test]
    fn block_pattern_of_output_dynamics() {
        let d = OutputDynamics::<f64>::new(1, 2).unwrap();
        assert_eq!(d.f.nrows(), 5);
        assert_eq!(d.g.shape(), (5, 3));
        assert_eq!(d.f[(1, 3)], 1.0);
        assert_eq!(d.f[(2, 4)], 1.0);
        assert_eq!(d.f.sum(), 2.0);
        assert_eq!(d.g[(0, 0)], 1.0);
        assert_eq!(d.g[(3, 1)], 1.0);
        assert_eq!(d.g[(4, 2)], 1.0);
        assert_eq!(d.g.sum(), 3.0);
    }

    #[test]
    fn scalar_cases() {
        let d = OutputDynamics::<f64>::new(1, 0).unwrap();
        let p = d.solve_care(&DMatrix::identity(1, 1)).unwrap().p;
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        let p4 = d.solve_care(&DMatrix::from_element(1, 1, 4.0)).unwrap().p;
        assert_relative_eq!(p4[(0, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn double_integrator_solution_and_rate() {
        let c = clf(0, 1, 1.0);
        let s3 = 3f64.sqrt();
        let expect = DMatrix::from_row_slice(2, 2, &[s3, 1.0, 1.0, s3]);
        // Oracle: the closed form satisfies the Riccati equation exactly.
        let d = c.dynamics();
        assert!(care_residual(&d.f, &d.g, &DMatrix::identity(2, 2), &expect) < 1e-14);
        assert!((c.p() - &expect).amax() < 1e-12);
        assert_eq!(c.p_eps(), c.p());
        assert_relative_eq!(c.gamma(), 1.0 / (s3 + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn epsilon_scaling_of_the_cross_term() {
        let c = clf(0, 1, 0.5);
        assert_relative_eq!(c.p_eps()[(0, 1)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.p_eps()[(1, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(c.p_eps()[(0, 0)], 4.0 * 3f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(c.p_eps()[(1, 1)], 3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn epsilon_out_of_range_is_rejected() {
        let d = OutputDynamics::<f64>::new(0, 1).unwrap();
        let p = DMatrix::identity(2, 2);
        assert!(ResClf::from_care(d.clone(), p.clone(), p.clone(), 0.0).is_err());
        assert!(ResClf::from_care(d, p.clone(), p, 1.5).is_err());
    }

    #[test]
    fn origin_terms_vanish() {
        let c = clf(1, 2, 0.3);
        let (v, lf, lg) = c.lyapunov_terms(&DVector::zeros(5));
        assert_eq!((v, lf), (0.0, 0.0));
        assert_eq!(lg.amax(), 0.0);
        let (row, b) = c.convergence_constraint_row(&DVector::zeros(5), &DMatrix::identity(3, 4), &DVector::zeros(3), 9);
        assert_eq!(row.amax(), 0.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn feedback_matches_scaled_pd_law() {
        let c = clf(1, 1, 0.4);
        let g = c.gains();
        let eta = DVector::from_vec(vec![0.3, -0.7, 0.2]);
        let v = c.feedback(&eta);
        let e = 0.4;
        assert_relative_eq!(v[0], -g.velocity[(0, 0)] * 0.3 / e, epsilon = 1e-12);
        assert_relative_eq!(
            v[1],
            -g.proportional[(0, 0)] * -0.7 / (e * e) - g.derivative[(0, 0)] * 0.2 / e,
            epsilon = 1e-12
        );
    }

    #[test]
    fn constraint_row_touches_only_accelerations() {
        let c = clf(0, 2, 0.5);
        let eta = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.05]);
        let j = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 1.0, -1.0]);
        let (row, _) = c.convergence_constraint_row(&eta, &j, &DVector::zeros(2), 3 + 2 + 4);
        assert!(row.columns(3, 6).amax() == 0.0);
        assert!(row.columns(0, 3).amax() > 0.0);
    }

    proptest! {
        #[test]
        fn value_is_positive_away_from_origin(eta in prop::collection::vec(-10.0..10.0f64, 5), eps in 0.05..1.0f64) {
            let c = clf(1, 2, eps);
            let e = DVector::from_vec(eta);
            prop_assume!(e.norm() > 1e-6);
            prop_assert!(c.value(&e) > 0.0);
        }

        #[test]
        fn care_residual_small_for_random_diagonal_weights(m1 in 0usize..4, m2 in 0usize..4, w in prop::collection::vec(0.05..20.0f64, 9)) {
            prop_assume!(m1 + m2 > 0);
            let d = OutputDynamics::<f64>::new(m1, m2).unwrap();
            let n = d.dim();
            let q = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| w[i]));
            let sol = d.solve_care(&q).unwrap();
            prop_assert!(sol.residual < 1e-8);
            prop_assert!(linalg::eigen_extremes(&sol.p).0 > 0.0);
        }
    }
}
