//! Conjugate gradients for symmetric positive definite operators.

use alloc::vec;
use alloc::vec::Vec;

use super::Field;
use crate::error::{Error, Result};

pub trait LinearOperator {
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Diagonal entries, if cheaply available (enables Jacobi preconditioning).
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}

impl<F: Fn(&[f64], &mut [f64])> LinearOperator for F {
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self(x, y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Stop once ‖b − Ax‖ ≤ tol·‖b‖.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { tol: 1e-12, max_iter: 10_000, jacobi: false }
    }
}

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(debug_assertions)]
fn check_symmetry<A: LinearOperator + ?Sized>(op: &A, n: usize) {
    // Deterministic pseudo-random probes.
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let u: Vec<f64> = (0..n).map(|_| next()).collect();
    let v: Vec<f64> = (0..n).map(|_| next()).collect();
    let (mut au, mut av) = (vec![0.0; n], vec![0.0; n]);
    op.apply(&u, &mut au);
    op.apply(&v, &mut av);
    let (l, r) = (dot(&au, &v), dot(&u, &av));
    let scale = libm::sqrt(dot(&au, &au) * dot(&v, &v)).max(1e-300);
    debug_assert!((l - r).abs() <= 1e-10 * scale, "CG operator is not symmetric: {l} vs {r}");
}

/// Solves `A x = b` for SPD `A`, starting from `x0` (zero if absent).
pub fn cg_solve<A: LinearOperator + ?Sized>(op: &A, rhs: &[f64], x0: Option<&[f64]>, opts: &CgOptions) -> Result<CgSolution> {
    let n = rhs.len();
    #[cfg(debug_assertions)]
    check_symmetry(op, n);

    let b_norm = libm::sqrt(dot(rhs, rhs));
    if b_norm == 0.0 {
        return Ok(CgSolution { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    op.apply(&x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let inv_diag = if opts.jacobi {
        op.diagonal().map(|d| d.into_iter().map(|v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect::<Vec<_>>())
    } else {
        None
    };
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(m) => z.iter_mut().zip(r).zip(m).for_each(|((zi, ri), mi)| *zi = ri * mi),
        None => z.copy_from_slice(r),
    };

    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = libm::sqrt(dot(&r, &r)) / b_norm;
    for iteration in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(CgSolution { x, iterations: iteration, relative_residual: res });
        }
        op.apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::CgBreakdown { iteration, curvature });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precondition(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = libm::sqrt(dot(&r, &r)) / b_norm;
    }
    if res <= opts.tol {
        return Ok(CgSolution { x, iterations: opts.max_iter, relative_residual: res });
    }
    Err(Error::CgNoConvergence { iterations: opts.max_iter, residual: res })
}

/// [`cg_solve`] on fields sharing the grid of `rhs`.
pub fn cg_solve_field<A: LinearOperator + ?Sized>(op: &A, rhs: &Field, x0: Option<&Field>, opts: &CgOptions) -> Result<Field> {
    let sol = cg_solve(op, rhs.values(), x0.map(Field::values), opts)?;
    Ok(Field::from_vec(*rhs.grid(), sol.x))
}
