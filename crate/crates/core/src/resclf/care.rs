//! Continuous algebraic Riccati equation `FᵀP + PF − PGGᵀP + Q = 0`.
//!
//! Newton–Kleinman iteration: starting from a stabilizing gain `K₀`, each
//! step solves the Lyapunov equation
//!
//! ```text
//! (F − G K)ᵀ P + P (F − G K) + Q + Kᵀ K = 0
//! ```
//!
//! and updates `K = Gᵀ P`. The Lyapunov equations are solved with the
//! Bartels–Stewart method on the real Schur form.

use nalgebra::DMatrix;

use crate::linalg::{self, symmetrize};
use crate::{Error, Real, Result};

pub const MAX_NEWTON_STEPS: usize = 50;

/// `‖FᵀP + PF − PGGᵀP + Q‖_max`.
pub fn care_residual<T: Real>(f: &DMatrix<T>, g: &DMatrix<T>, q: &DMatrix<T>, p: &DMatrix<T>) -> T {
    let pg = p * g;
    let r = f.transpose() * p + p * f - &pg * pg.transpose() + q;
    linalg::max_abs(&r)
}

/// Diagonal blocks of a quasi-upper-triangular matrix as `(start, size)`.
fn schur_blocks<T: Real>(t: &DMatrix<T>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let two = i + 1 < n && t[(i + 1, i)].abs() > T::default_epsilon() * (t[(i, i)].abs() + t[(i + 1, i + 1)].abs() + T::one());
        let size = if two { 2 } else { 1 };
        out.push((i, size));
        i += size;
    }
    out
}

/// Solves `A X + X B = C` for blocks of size at most 2 through the
/// Kronecker form `(I ⊗ A + Bᵀ ⊗ I) vec X = vec C`.
fn small_sylvester<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    let (p, r) = (a.nrows(), b.nrows());
    let mut k = DMatrix::zeros(p * r, p * r);
    for j in 0..r {
        for i in 0..p {
            let row = j * p + i;
            for l in 0..p {
                k[(row, j * p + l)] += a[(i, l)];
            }
            for l in 0..r {
                k[(row, l * p + i)] += b[(l, j)];
            }
        }
    }
    let rhs = DMatrix::from_column_slice(p * r, 1, c.as_slice());
    let x = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular {
            what: "Lyapunov operator (closed loop has eigenvalues summing to zero)".into(),
            cond: f64::INFINITY,
        })?;
    Ok(DMatrix::from_column_slice(p, r, x.as_slice()))
}

/// Solves `AᵀX + XA + C = 0` for symmetric `C` by Bartels–Stewart.
pub fn solve_lyapunov<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || c.nrows() != n || c.ncols() != n {
        return Err(Error::arg("Lyapunov equation needs square matrices of equal size"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let (u, t) = a.clone().schur().unpack();
    let ct = u.transpose() * c * &u;
    let tt = t.transpose();
    let blocks = schur_blocks(&t);
    let mut y = DMatrix::zeros(n, n);
    // Tᵀ Y + Y T = −C̃ with Tᵀ block lower triangular: sweep blocks in order.
    for &(i0, si) in &blocks {
        for &(j0, sj) in &blocks {
            let mut rhs = -ct.view((i0, j0), (si, sj)).into_owned();
            for &(k0, sk) in blocks.iter().take_while(|b| b.0 < i0) {
                rhs -= tt.view((i0, k0), (si, sk)) * y.view((k0, j0), (sk, sj));
            }
            for &(l0, sl) in blocks.iter().take_while(|b| b.0 < j0) {
                rhs -= y.view((i0, l0), (si, sl)) * t.view((l0, j0), (sl, sj));
            }
            let a_blk = tt.view((i0, i0), (si, si)).into_owned();
            let b_blk = t.view((j0, j0), (sj, sj)).into_owned();
            let blk = small_sylvester(&a_blk, &b_blk, &rhs)?;
            y.view_mut((i0, j0), (si, sj)).copy_from(&blk);
        }
    }
    Ok(symmetrize(&(&u * y * u.transpose())))
}

/// Result of a CARE solve with its convergence record.
#[derive(Debug, Clone)]
pub struct CareSolution<T: Real> {
    pub p: DMatrix<T>,
    pub residual: T,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Newton–Kleinman from the stabilizing gain `k0`.
pub fn solve_care_from<T: Real>(
    f: &DMatrix<T>,
    g: &DMatrix<T>,
    q: &DMatrix<T>,
    k0: &DMatrix<T>,
) -> Result<CareSolution<T>> {
    let n = f.nrows();
    if f.ncols() != n || g.nrows() != n || q.nrows() != n || q.ncols() != n || k0.nrows() != g.ncols() || k0.ncols() != n {
        return Err(Error::arg("CARE dimensions are inconsistent"));
    }
    let tol = T::lit(1e-13) * (T::one() + linalg::max_abs(q));
    let mut k = k0.clone();
    let mut history = Vec::new();
    let mut best: Option<(T, DMatrix<T>)> = None;
    for it in 1..=MAX_NEWTON_STEPS {
        let a = f - g * &k;
        let c = q + k.transpose() * &k;
        let p = solve_lyapunov(&a, &c)?;
        let res = care_residual(f, g, q, &p);
        history.push(res.as_f64());
        log::trace!("CARE step {it}: residual {:.3e}", res.as_f64());
        let improved = best.as_ref().is_none_or(|(r, _)| res < *r);
        if improved {
            best = Some((res, p.clone()));
        }
        if res <= tol || (!improved && res < T::lit(1e-10)) {
            let (residual, p) = best.expect("at least one step");
            return Ok(CareSolution {
                p,
                residual,
                iterations: it,
                history,
            });
        }
        k = g.transpose() * &p;
    }
    match best {
        Some((residual, p)) if residual < T::lit(1e-10) => Ok(CareSolution {
            p,
            residual,
            iterations: MAX_NEWTON_STEPS,
            history,
        }),
        _ => Err(Error::CareNonConvergence {
            iterations: MAX_NEWTON_STEPS,
            history,
        }),
    }
}
