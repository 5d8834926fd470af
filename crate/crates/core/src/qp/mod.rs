//! Dense convex QP
//!
//! ```text
//! min ½ xᵀHx + fᵀx   s.t.  A_eq x = b_eq,  A_in x ≤ b_in,  lower ≤ x ≤ upper
//! ```
//!
//! solved with a Goldfarb–Idnani dual active-set method. Inequalities are
//! indexed as the rows of `A_in` followed, per variable, by its finite lower
//! and then finite upper bound.

mod dump;
mod solver;

pub use dump::{read_dump, write_dump};
pub use solver::QpSolver;

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T: Real> {
    pub h: DMatrix<T>,
    pub f: DVector<T>,
    pub a_eq: DMatrix<T>,
    pub b_eq: DVector<T>,
    pub a_in: DMatrix<T>,
    pub b_in: DVector<T>,
    pub lower: DVector<T>,
    pub upper: DVector<T>,
}

/// Where an inequality of the combined index space comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InequalitySource {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

impl<T: Real> QpProblem<T> {
    /// Unconstrained problem with unbounded variables.
    pub fn new(h: DMatrix<T>, f: DVector<T>) -> Self {
        let n = f.len();
        QpProblem {
            h,
            f,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lower: DVector::from_element(n, -T::infinity()),
            upper: DVector::from_element(n, T::infinity()),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<T>, b: DVector<T>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<T>, b: DVector<T>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<T>, upper: DVector<T>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let bad = |what: &str| Err(Error::arg(format!("QP dimension mismatch: {what}")));
        if self.h.shape() != (n, n) {
            return bad("H");
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return bad("equality block");
        }
        if self.a_in.ncols() != n || self.a_in.nrows() != self.b_in.len() {
            return bad("inequality block");
        }
        if self.lower.len() != n || self.upper.len() != n {
            return bad("bounds");
        }
        let finite = linalg::all_finite(&self.h)
            && linalg::all_finite_vec(&self.f)
            && linalg::all_finite(&self.a_eq)
            && linalg::all_finite_vec(&self.b_eq)
            && linalg::all_finite(&self.a_in)
            && linalg::all_finite_vec(&self.b_in);
        if !finite {
            return Err(Error::Problem("non-finite QP data".into()));
        }
        if (0..n).any(|i| self.lower[i] > self.upper[i]) {
            return Err(Error::Problem("lower bound above upper bound".into()));
        }
        Ok(())
    }

    /// Inequality sources in combined index order.
    pub fn inequality_sources(&self) -> Vec<InequalitySource> {
        let mut out: Vec<_> = (0..self.a_in.nrows()).map(InequalitySource::Row).collect();
        for i in 0..self.n() {
            if self.lower[i].is_finite_value() {
                out.push(InequalitySource::Lower(i));
            }
            if self.upper[i].is_finite_value() {
                out.push(InequalitySource::Upper(i));
            }
        }
        out
    }

    /// All inequalities as `C x ≤ d` in combined index order.
    pub fn stacked_inequalities(&self) -> (DMatrix<T>, DVector<T>) {
        let src = self.inequality_sources();
        let n = self.n();
        let mut c = DMatrix::zeros(src.len(), n);
        let mut d = DVector::zeros(src.len());
        for (k, s) in src.iter().enumerate() {
            match *s {
                InequalitySource::Row(r) => {
                    c.set_row(k, &self.a_in.row(r));
                    d[k] = self.b_in[r];
                }
                InequalitySource::Lower(i) => {
                    c[(k, i)] = -T::one();
                    d[k] = -self.lower[i];
                }
                InequalitySource::Upper(i) => {
                    c[(k, i)] = T::one();
                    d[k] = self.upper[i];
                }
            }
        }
        (c, d)
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        T::lit(0.5) * x.dot(&(&self.h * x)) + self.f.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIterations => "max_iter",
        }
    }
}

/// KKT residuals at a candidate primal-dual point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport<T> {
    /// `‖Hx + f + A_eqᵀν + Cᵀμ‖_∞`.
    pub stationarity: T,
    /// Largest equality or inequality violation.
    pub primal: T,
    /// `max |μᵢ (Cᵢx − dᵢ)|`.
    pub complementarity: T,
    /// `max(0, −min μ)`.
    pub dual: T,
}

impl<T: Real> KktReport<T> {
    pub fn max(&self) -> T {
        self.stationarity.max(self.primal).max(self.complementarity).max(self.dual)
    }
}

/// `eq_multipliers` has one entry per equality row, `ineq_multipliers` one
/// per inequality of the combined index space.
pub fn kkt_residuals<T: Real>(
    p: &QpProblem<T>,
    x: &DVector<T>,
    eq_multipliers: &DVector<T>,
    ineq_multipliers: &DVector<T>,
) -> KktReport<T> {
    let (c, d) = p.stacked_inequalities();
    let grad = &p.h * x + &p.f + p.a_eq.transpose() * eq_multipliers + c.transpose() * ineq_multipliers;
    let eq_res = &p.a_eq * x - &p.b_eq;
    let slack = &c * x - &d;
    let mut primal = linalg::max_abs_vec(&eq_res);
    let mut comp = T::zero();
    let mut dual = T::zero();
    for i in 0..slack.len() {
        primal = primal.max(slack[i]);
        comp = comp.max((ineq_multipliers[i] * slack[i]).abs());
        dual = dual.max(-ineq_multipliers[i]);
    }
    KktReport {
        stationarity: linalg::max_abs_vec(&grad),
        primal,
        complementarity: comp,
        dual,
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution<T: Real> {
    pub x: DVector<T>,
    pub objective: T,
    pub status: QpStatus,
    pub kkt: KktReport<T>,
    /// Active inequalities in the combined index space, ascending.
    pub active_set: Vec<usize>,
    pub eq_multipliers: DVector<T>,
    pub ineq_multipliers: DVector<T>,
    /// Active-set changes performed.
    pub iterations: usize,
    /// Objective after each active-set change; nondecreasing.
    pub objective_history: Vec<T>,
    pub solve_us: u64,
    /// Whether `H` needed the `1e-9·I` shift.
    pub regularized: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combined_inequality_order() {
        let p = QpProblem::<f64>::new(DMatrix::identity(2, 2), DVector::zeros(2))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_vec(vec![1.0]))
            .with_bounds(
                DVector::from_vec(vec![0.0, f64::NEG_INFINITY]),
                DVector::from_vec(vec![2.0, 3.0]),
            );
        assert_eq!(
            p.inequality_sources(),
            vec![
                InequalitySource::Row(0),
                InequalitySource::Lower(0),
                InequalitySource::Upper(0),
                InequalitySource::Upper(1)
            ]
        );
        let (c, d) = p.stacked_inequalities();
        assert_eq!(c.row(1).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0]);
        assert_eq!(d[3], 3.0);
    }

    #[test]
    fn perturbed_point_reports_primal_violation() {
        let p = QpProblem::<f64>::new(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_bounds(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![f64::INFINITY]));
        let ok = kkt_residuals(&p, &DVector::from_vec(vec![1.0]), &DVector::zeros(0), &DVector::from_vec(vec![1.0]));
        assert!(ok.max() < 1e-15);
        let bad = kkt_residuals(&p, &DVector::from_vec(vec![0.9]), &DVector::zeros(0), &DVector::from_vec(vec![1.0]));
        assert!(bad.primal > 0.09);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = QpProblem::<f64>::new(DMatrix::identity(2, 2), DVector::zeros(3));
        assert!(matches!(p.validate(), Err(Error::Argument(_))));
    }
}
