//! Independent reference computations used by the invariant suites.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::qp::QpProblem;
use crate::Real;

/// Optimum of a strictly convex QP found by enumerating active sets.
///
/// For every candidate set `S` the equality-constrained KKT system is solved
/// through its Schur complement; the optimum is the best candidate that is
/// primal feasible. Candidates grow one constraint at a time, and only by
/// constraints the current minimizer violates: if `S` is strictly inside an
/// optimal active set `T` and its minimizer is infeasible, some member of
/// `T \ S` is violated there (otherwise that minimizer would also minimize
/// over `{C_T x ≤ d_T}`, whose minimizer is the optimum). Adding constraints
/// never lowers the equality-constrained minimum, so a branch is also cut
/// once its value reaches the incumbent.
pub fn enumerate_qp<T: Real>(p: &QpProblem<T>) -> Option<(DVector<T>, T)> {
    Enumeration::new(p, None)?.run()
}

struct Enumeration<'a, T: Real> {
    p: &'a QpProblem<T>,
    c: DMatrix<T>,
    d: DVector<T>,
    /// `L⁻¹ aᵢ` for every equality row followed by every inequality row.
    w: DMatrix<T>,
    /// Residual `aᵢ·x_free − bᵢ` at the unconstrained minimizer.
    r: DVector<T>,
    x_free: DVector<T>,
    l: DMatrix<T>,
    cutoff: Option<T>,
    best: Option<(DVector<T>, T)>,
    subset: Vec<usize>,
    seen: HashSet<Vec<usize>>,
}

impl<'a, T: Real> Enumeration<'a, T> {
    fn new(p: &'a QpProblem<T>, cutoff: Option<T>) -> Option<Self> {
        let (c, d) = p.stacked_inequalities();
        let l = p.h.clone().cholesky()?.l();
        let x_free = p.h.clone().cholesky()?.solve(&(-&p.f));
        let all = crate::linalg::stack_rows(&[p.a_eq.clone(), c.clone()], p.n());
        let b = crate::linalg::stack_vecs(&[p.b_eq.clone(), d.clone()]);
        let w = l.solve_lower_triangular(&all.transpose())?;
        let r = &all * &x_free - b;
        Some(Enumeration { p, c, d, w, r, x_free, l, cutoff, best: None, subset: Vec::new(), seen: HashSet::new() })
    }

    fn run(mut self) -> Option<(DVector<T>, T)> {
        self.visit();
        self.best
    }

    /// Minimizer and objective on `{A_eq x = b_eq, C_S x = d_S}`, or `None`
    /// when those rows are linearly dependent.
    fn equality_minimizer(&self) -> Option<(DVector<T>, T)> {
        let meq = self.p.a_eq.nrows();
        let rows: Vec<usize> = (0..meq).chain(self.subset.iter().map(|&j| meq + j)).collect();
        let k = rows.len();
        let f0 = self.p.objective(&self.x_free);
        if k == 0 {
            return Some((self.x_free.clone(), f0));
        }
        let ws = DMatrix::from_fn(self.w.nrows(), k, |i, j| self.w[(i, rows[j])]);
        let m = ws.transpose() * &ws;
        let scale = (0..k).map(|i| m[(i, i)]).fold(T::zero(), |a, b| a.max(b));
        let chol = m.cholesky()?;
        let lm = chol.l();
        let pivot = (0..k).map(|i| lm[(i, i)] * lm[(i, i)]).fold(T::infinity(), |a, b| a.min(b));
        if !(pivot > T::lit(1e-12) * scale) {
            return None;
        }
        let rs = DVector::from_fn(k, |i, _| self.r[rows[i]]);
        let lambda = chol.solve(&rs);
        // x = x_free − H⁻¹ A_Sᵀ λ
        let shift = self.l.transpose().solve_upper_triangular(&(&ws * &lambda))?;
        let x = &self.x_free - shift;
        Some((x, f0 + T::lit(0.5) * rs.dot(&lambda)))
    }

    fn visit(&mut self) {
        if !self.seen.insert(self.subset.clone()) {
            return;
        }
        let Some((x, obj)) = self.equality_minimizer() else {
            return;
        };
        let bound = match (&self.best, self.cutoff) {
            (Some((_, b)), _) => Some(*b),
            (None, c) => c,
        };
        if matches!(bound, Some(b) if obj >= b) {
            return;
        }
        let slack = &self.c * &x - &self.d;
        let tol = T::lit(1e-9);
        let mut violated: Vec<usize> = (0..slack.len())
            .filter(|&i| slack[i] > tol * (T::one() + self.d[i].abs()))
            .collect();
        violated.sort_by(|&a, &b| slack[b].partial_cmp(&slack[a]).unwrap_or(std::cmp::Ordering::Equal));
        if violated.is_empty() {
            self.best = Some((x, obj));
            return;
        }
        if self.p.a_eq.nrows() + self.subset.len() >= self.p.n() {
            return;
        }
        for j in violated {
            let at = self.subset.binary_search(&j).unwrap_err();
            self.subset.insert(at, j);
            self.visit();
            self.subset.remove(at);
        }
    }
}

/// Random strictly convex QP that is feasible by construction: constraints
/// are built around a random interior point.
pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m_in: usize, m_eq: usize) -> QpProblem<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &m * m.transpose() + DMatrix::identity(n, n) * rng.random_range(0.1..1.0);
    let f = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let m_eq = m_eq.min(n.saturating_sub(1));
    let a_eq = DMatrix::from_fn(m_eq, n, |_, _| rng.random_range(-1.0..1.0));
    let b_eq = &a_eq * &x0;
    let a_in = DMatrix::from_fn(m_in, n, |_, _| rng.random_range(-1.0..1.0));
    let slack = DVector::from_fn(m_in, |_, _| rng.random_range(0.0..0.5));
    let b_in = &a_in * &x0 + slack;
    QpProblem::new(h, f).with_equalities(a_eq, b_eq).with_inequalities(a_in, b_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{QpSolver, QpStatus};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oracle_solves_a_box_projection() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-3.0, 0.5]))
            .with_bounds(DVector::from_vec(vec![-1.0, -1.0]), DVector::from_vec(vec![1.0, 1.0]));
        let (x, _) = enumerate_qp(&p).unwrap();
        assert_eq!(x, DVector::from_vec(vec![1.0, -0.5]));
    }

    #[test]
    fn solver_agrees_with_oracle_on_small_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..8);
            let (m_in, m_eq) = (rng.random_range(0..8), rng.random_range(0..3));
            let p = random_qp(&mut rng, n, m_in, m_eq);
            let (_, best) = enumerate_qp(&p).unwrap();
            let s = QpSolver::new().solve(&p, None).unwrap();
            assert_eq!(s.status, QpStatus::Optimal);
            assert!((s.objective - best).abs() < 1e-8 * (1.0 + best.abs()), "{} vs {best}", s.objective);
            let oracle_kkt = s.kkt.max();
            assert!(oracle_kkt < 1e-8);
        }
    }
}
