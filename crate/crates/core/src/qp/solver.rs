use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{kkt_residuals, InequalitySource, QpProblem, QpSolution, QpStatus};
use crate::linalg;
use crate::{Error, Real, Result};

/// Shift added to `H` when its smallest eigenvalue falls below it.
pub const REGULARIZATION: f64 = 1e-9;

/// Dual active-set solver. Holds reusable buffers, so use one instance per
/// thread.
#[derive(Debug, Clone)]
pub struct QpSolver<T: Real> {
    iteration_cap: Option<usize>,
    normals: DMatrix<T>,
}

impl<T: Real> Default for QpSolver<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Working state in the transformed space `y = Lᵀx`, where the problem
/// reads `min ½‖y + w₀‖²` s.t. `wᵢᵀy ≥ βᵢ` (or `= βᵢ` for equalities).
struct Dual<'a, T: Real> {
    w: &'a DMatrix<T>,
    beta: &'a DVector<T>,
    w0: &'a DVector<T>,
    meq: usize,
    active: Vec<usize>,
    u: Vec<T>,
    y: DVector<T>,
}

enum Step {
    Added,
    Dropped,
    Infeasible,
}

impl<T: Real> Dual<'_, T> {
    fn basis(&self) -> Option<(DMatrix<T>, DMatrix<T>)> {
        if self.active.is_empty() {
            return None;
        }
        let n = self.w.nrows();
        let mut m = DMatrix::zeros(n, self.active.len());
        for (k, &c) in self.active.iter().enumerate() {
            m.set_column(k, &self.w.column(c));
        }
        let qr = m.qr();
        Some((qr.q(), qr.r()))
    }

    /// Component of `w_p` outside the active span and the multiplier
    /// direction `r = R⁻¹Q₁ᵀw_p`.
    fn directions(&self, p: usize) -> (DVector<T>, DVector<T>) {
        let wp = self.w.column(p).into_owned();
        match self.basis() {
            None => (wp, DVector::zeros(0)),
            Some((q1, r)) => {
                let d1 = q1.transpose() * &wp;
                let z = &wp - &q1 * &d1;
                let rr = r.solve_upper_triangular(&d1).unwrap_or_else(|| DVector::zeros(d1.len()));
                (z, rr)
            }
        }
    }

    fn independent(&self, p: usize) -> bool {
        let (z, _) = self.directions(p);
        z.norm() > T::lit(1e-10) * (T::one() + self.w.column(p).norm())
    }

    /// Exact minimizer over the current active set.
    fn resolve(&mut self) {
        match self.basis() {
            None => {
                self.y = -self.w0;
                self.u.clear();
            }
            Some((q1, r)) => {
                let b = DVector::from_iterator(self.active.len(), self.active.iter().map(|&c| self.beta[c]));
                let c = r.transpose().solve_lower_triangular(&b).unwrap_or_else(|| DVector::zeros(b.len()));
                let t = c + q1.transpose() * self.w0;
                self.y = -self.w0 + &q1 * &t;
                let u = r.solve_upper_triangular(&t).unwrap_or_else(|| DVector::zeros(t.len()));
                self.u = u.iter().copied().collect();
            }
        }
    }

    /// Drops inequalities with negative multipliers, most negative first.
    fn drop_negative(&mut self) -> usize {
        let mut dropped = 0;
        loop {
            let scale = self.u.iter().fold(T::one(), |a, v| a.max(v.abs()));
            let tol = T::lit(1e-12) * scale;
            let mut worst: Option<(usize, T)> = None;
            for (k, &c) in self.active.iter().enumerate() {
                if c >= self.meq && self.u[k] < -tol && worst.is_none_or(|(_, v)| self.u[k] < v) {
                    worst = Some((k, self.u[k]));
                }
            }
            match worst {
                Some((k, _)) => {
                    self.active.remove(k);
                    self.u.remove(k);
                    self.resolve();
                    dropped += 1;
                }
                None => break,
            }
        }
        for (k, &c) in self.active.iter().enumerate() {
            if c >= self.meq && self.u[k] < T::zero() {
                self.u[k] = T::zero();
            }
        }
        dropped
    }

    fn slack(&self, c: usize) -> T {
        self.w.column(c).dot(&self.y) - self.beta[c]
    }

    fn tolerance(&self, c: usize) -> T {
        T::lit(1e-11) * (T::one() + self.beta[c].abs() + self.w.column(c).norm() * self.y.norm())
    }

    /// Most violated inactive inequality, lowest index on ties.
    fn most_violated(&self) -> Option<usize> {
        let mut best: Option<(usize, T)> = None;
        for c in self.meq..self.w.ncols() {
            if self.active.contains(&c) {
                continue;
            }
            let s = self.slack(c);
            if s < -self.tolerance(c) && best.is_none_or(|(_, v)| s < v) {
                best = Some((c, s));
            }
        }
        best.map(|(c, _)| c)
    }

    /// One primal/dual step towards satisfying constraint `p`.
    fn step(&mut self, p: usize, up: &mut T) -> Step {
        let (z, r) = self.directions(p);
        let zz = z.norm_squared();
        let rtol = T::lit(1e-12) * r.iter().fold(T::one(), |a, v| a.max(v.abs()));
        let mut blocking: Option<(usize, T)> = None;
        for (k, &c) in self.active.iter().enumerate() {
            if c >= self.meq && r[k] > rtol {
                let t = self.u[k] / r[k];
                if blocking.is_none_or(|(_, v)| t < v) {
                    blocking = Some((k, t));
                }
            }
        }
        let wnorm = self.w.column(p).norm_squared();
        let primal_step = zz > T::lit(1e-20) * (T::one() + wnorm);
        let t2 = if primal_step {
            -self.slack(p) / zz
        } else {
            T::infinity()
        };
        let t1 = blocking.map_or(T::infinity(), |(_, t)| t);
        if !primal_step && blocking.is_none() {
            return Step::Infeasible;
        }
        let t = t1.min(t2);
        if primal_step {
            self.y += &z * t;
        }
        for k in 0..self.active.len() {
            self.u[k] -= t * r[k];
        }
        *up += t;
        if primal_step && t2 <= t1 {
            self.active.push(p);
            self.u.push(*up);
            Step::Added
        } else {
            let (k, _) = blocking.expect("blocking constraint");
            self.active.remove(k);
            self.u.remove(k);
            Step::Dropped
        }
    }

    fn objective(&self) -> T {
        T::lit(0.5) * ((&self.y + self.w0).norm_squared() - self.w0.norm_squared())
    }
}

impl<T: Real> QpSolver<T> {
    pub fn new() -> Self {
        QpSolver {
            iteration_cap: None,
            normals: DMatrix::zeros(0, 0),
        }
    }

    /// Overrides the default cap of `10·(n + m)` active-set changes.
    pub fn with_iteration_cap(mut self, cap: usize) -> Self {
        self.iteration_cap = Some(cap);
        self
    }

    /// Solves `p`, optionally seeding the active set with inequality indices
    /// from a previous solution.
    pub fn solve(&mut self, p: &QpProblem<T>, warm_start: Option<&[usize]>) -> Result<QpSolution<T>> {
        let started = Instant::now();
        p.validate()?;
        let n = p.n();
        let sources = p.inequality_sources();
        let (meq, mi) = (p.a_eq.nrows(), sources.len());
        if let Some(ws) = warm_start {
            if let Some(bad) = ws.iter().find(|&&i| i >= mi) {
                return Err(Error::arg(format!("warm-start index {bad} exceeds {mi} inequalities")));
            }
        }

        let hs = linalg::symmetrize(&p.h);
        let (lo, hi) = linalg::eigen_extremes(&hs);
        let reg = T::lit(REGULARIZATION);
        if lo < -reg * T::one().max(hi.abs()) {
            return Err(Error::Problem(format!(
                "Hessian is indefinite (smallest eigenvalue {:.3e})",
                lo.as_f64()
            )));
        }
        let regularized = lo < reg;
        let hr = if regularized {
            &hs + DMatrix::identity(n, n) * reg
        } else {
            hs
        };
        let chol = hr.clone().cholesky().ok_or_else(|| Error::Problem("Hessian is not positive definite after regularization".into()))?;
        let l = chol.l();

        // Constraint normals in "≥" form: equalities as given, A_in rows and
        // upper bounds negated.
        let total = meq + mi;
        let mut normals = std::mem::take(&mut self.normals);
        normals.resize_mut(n, total, T::zero());
        normals.fill(T::zero());
        let mut beta = DVector::zeros(total);
        for r in 0..meq {
            normals.set_column(r, &p.a_eq.row(r).transpose());
            beta[r] = p.b_eq[r];
        }
        for (k, s) in sources.iter().enumerate() {
            let c = meq + k;
            match *s {
                InequalitySource::Row(r) => {
                    normals.set_column(c, &(-p.a_in.row(r).transpose()));
                    beta[c] = -p.b_in[r];
                }
                InequalitySource::Lower(i) => {
                    normals[(i, c)] = T::one();
                    beta[c] = p.lower[i];
                }
                InequalitySource::Upper(i) => {
                    normals[(i, c)] = -T::one();
                    beta[c] = -p.upper[i];
                }
            }
        }
        let w = l.solve_lower_triangular(&normals).expect("nonsingular Cholesky factor");
        self.normals = normals;
        let w0 = l.solve_lower_triangular(&p.f).expect("nonsingular Cholesky factor");

        let mut d = Dual {
            w: &w,
            beta: &beta,
            w0: &w0,
            meq,
            active: Vec::new(),
            u: Vec::new(),
            y: -&w0,
        };

        let mut status = QpStatus::Optimal;
        let mut dependent = Vec::new();
        for r in 0..meq {
            if d.independent(r) {
                d.active.push(r);
            } else {
                dependent.push(r);
            }
        }
        if let Some(ws) = warm_start {
            let mut seen = Vec::new();
            for &i in ws {
                let c = meq + i;
                if !seen.contains(&c) && d.independent(c) {
                    d.active.push(c);
                    seen.push(c);
                }
            }
        }
        d.resolve();
        d.drop_negative();
        for &r in &dependent {
            if d.slack(r).abs() > T::lit(1e3) * d.tolerance(r) {
                log::debug!("QP equality row {r} is dependent and inconsistent");
                status = QpStatus::Infeasible;
            }
        }

        let cap = self.iteration_cap.unwrap_or(10 * (n + total));
        let mut iterations = 0;
        let mut history = vec![d.objective()];
        'outer: while status == QpStatus::Optimal {
            let Some(pc) = d.most_violated() else {
                break;
            };
            let mut up = T::zero();
            loop {
                if iterations >= cap {
                    status = QpStatus::MaxIterations;
                    break 'outer;
                }
                iterations += 1;
                match d.step(pc, &mut up) {
                    Step::Infeasible => {
                        status = QpStatus::Infeasible;
                        break 'outer;
                    }
                    Step::Dropped => {
                        history.push(d.objective());
                    }
                    Step::Added => {
                        d.resolve();
                        iterations += d.drop_negative();
                        history.push(d.objective());
                        break;
                    }
                }
            }
        }

        let mut x = l.transpose().solve_upper_triangular(&d.y).expect("nonsingular Cholesky factor");
        for i in 0..n {
            x[i] = x[i].max(p.lower[i]).min(p.upper[i]);
        }
        let mut eq_mult = DVector::zeros(meq);
        let mut ineq_mult = DVector::zeros(mi);
        for (k, &c) in d.active.iter().enumerate() {
            if c < meq {
                eq_mult[c] = -d.u[k];
            } else {
                ineq_mult[c - meq] = d.u[k];
            }
        }
        let mut active_set: Vec<usize> = d.active.iter().filter(|&&c| c >= meq).map(|&c| c - meq).collect();
        active_set.sort_unstable();
        let kkt = kkt_residuals(p, &x, &eq_mult, &ineq_mult);
        Ok(QpSolution {
            objective: p.objective(&x),
            x,
            status,
            kkt,
            active_set,
            eq_multipliers: eq_mult,
            ineq_multipliers: ineq_mult,
            iterations,
            objective_history: history,
            solve_us: started.elapsed().as_micros() as u64,
            regularized,
        })
    }
}
