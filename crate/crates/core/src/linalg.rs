//! Small dense linear-algebra helpers shared by the dynamics, CLF and QP code.
//!
//! Every inversion goes through a condition-number check so that numerically
//! stiff models surface as errors instead of silently corrupting results.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Real, Result};

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec<T: Real>(v: &DVector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn all_finite<T: Real>(m: &DMatrix<T>) -> bool {
    m.iter().all(|v| v.is_finite_value())
}

pub fn all_finite_vec<T: Real>(v: &DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite_value())
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn eigen_extremes<T: Real>(m: &DMatrix<T>) -> (T, T) {
    if m.nrows() == 0 {
        return (T::zero(), T::zero());
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(T::infinity(), |a, b| a.min(b));
    let hi = eig.iter().copied().fold(-T::infinity(), |a, b| a.max(b));
    (lo, hi)
}

/// Spectral condition number of a symmetric positive definite matrix;
/// infinite when the matrix is not positive definite.
pub fn spd_condition<T: Real>(m: &DMatrix<T>) -> T {
    let (lo, hi) = eigen_extremes(m);
    if lo <= T::zero() {
        T::infinity()
    } else {
        hi / lo
    }
}

/// Condition number of a general square matrix from its singular values.
pub fn condition<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::one();
    }
    let sv = m.clone().singular_values();
    let lo = sv.iter().copied().fold(T::infinity(), |a, b| a.min(b));
    let hi = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if lo <= T::zero() {
        T::infinity()
    } else {
        hi / lo
    }
}

fn check_condition<T: Real>(cond: T, what: &str) -> Result<()> {
    if !cond.is_finite_value() || cond.as_f64() > MAX_CONDITION {
        return Err(Error::Singular {
            what: what.to_string(),
            cond: cond.as_f64(),
        });
    }
    Ok(())
}

/// Solves `M X = R` for symmetric positive definite `M`.
pub fn spd_solve<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    if !all_finite(m) {
        return Err(Error::ModelEvaluation(what.to_string()));
    }
    check_condition(spd_condition(m), what)?;
    let chol = symmetrize(m).cholesky().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        cond: f64::INFINITY,
    })?;
    Ok(chol.solve(rhs))
}

pub fn spd_solve_vec<T: Real>(m: &DMatrix<T>, rhs: &DVector<T>, what: &str) -> Result<DVector<T>> {
    let r = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let x = spd_solve(m, &r, what)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Solves `M X = R` for a general square `M` using LU.
pub fn solve<T: Real>(m: &DMatrix<T>, rhs: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    if !all_finite(m) {
        return Err(Error::ModelEvaluation(what.to_string()));
    }
    check_condition(condition(m), what)?;
    m.clone().lu().solve(rhs).ok_or_else(|| Error::Singular {
        what: what.to_string(),
        cond: f64::INFINITY,
    })
}

pub fn solve_vec<T: Real>(m: &DMatrix<T>, rhs: &DVector<T>, what: &str) -> Result<DVector<T>> {
    let r = DMatrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let x = solve(m, &r, what)?;
    Ok(DVector::from_column_slice(x.as_slice()))
}

/// Singular values in descending order plus the numerical rank.
#[derive(Debug, Clone)]
pub struct RankReport<T> {
    pub singular_values: Vec<T>,
    pub rank: usize,
    pub full_row_rank: bool,
}

pub fn rank_report<T: Real>(m: &DMatrix<T>) -> RankReport<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return RankReport {
            singular_values: Vec::new(),
            rank: 0,
            full_row_rank: m.nrows() == 0,
        };
    }
    let mut sv: Vec<T> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let top = sv.first().copied().unwrap_or(T::zero());
    let tol = top * T::lit(1e-10).max(T::default_epsilon() * T::lit(100.0));
    let rank = sv.iter().filter(|s| **s > tol).count();
    RankReport {
        full_row_rank: rank == m.nrows(),
        singular_values: sv,
        rank,
    }
}

/// Vertical concatenation of blocks sharing `ncols` columns.
pub fn stack_rows<T: Real>(blocks: &[DMatrix<T>], ncols: usize) -> DMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, ncols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), ncols)).copy_from(b);
        r += b.nrows();
    }
    out
}

pub fn stack_vecs<T: Real>(parts: &[DVector<T>]) -> DVector<T> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(p);
        r += p.len();
    }
    out
}
