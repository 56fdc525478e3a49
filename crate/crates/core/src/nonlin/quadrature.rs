//! Adaptive Gauss–Legendre quadrature for vector-valued integrands.

use crate::error::{Error, Result};

const NODES: [f64; 5] = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
const WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

pub const MAX_DEPTH: usize = 40;

fn panel<const D: usize>(f: &impl Fn(f64) -> [f64; D], a: f64, b: f64) -> [f64; D] {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut acc = [0.0; D];
    for (x, w) in NODES.iter().zip(WEIGHTS) {
        let v = f(mid + half * x);
        for (s, vi) in acc.iter_mut().zip(v) {
            *s += w * half * vi;
        }
    }
    acc
}

/// Integrates `f` over `[a, b]` component-wise until every component of each
/// panel agrees with its bisection to `rel_tol` (with absolute floor `abs_tol`).
pub fn integrate<const D: usize>(f: impl Fn(f64) -> [f64; D], a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<[f64; D]> {
    if a == b {
        return Ok([0.0; D]);
    }
    let whole = panel(&f, a, b);
    refine(&f, a, b, whole, rel_tol, abs_tol, 0)
}

fn refine<const D: usize>(
    f: &impl Fn(f64) -> [f64; D],
    a: f64,
    b: f64,
    whole: [f64; D],
    rel_tol: f64,
    abs_tol: f64,
    depth: usize,
) -> Result<[f64; D]> {
    let m = 0.5 * (a + b);
    let (left, right) = (panel(f, a, m), panel(f, m, b));
    let mut fine = [0.0; D];
    let mut converged = true;
    for i in 0..D {
        fine[i] = left[i] + right[i];
        if !fine[i].is_finite() {
            return Err(Error::QuadratureFailure { lo: a, hi: b, depth });
        }
        if (fine[i] - whole[i]).abs() > (rel_tol * fine[i].abs()).max(abs_tol) {
            converged = false;
        }
    }
    if converged {
        return Ok(fine);
    }
    if depth >= MAX_DEPTH {
        return Err(Error::QuadratureFailure { lo: a, hi: b, depth });
    }
    let l = refine(f, a, m, left, rel_tol, 0.5 * abs_tol, depth + 1)?;
    let r = refine(f, m, b, right, rel_tol, 0.5 * abs_tol, depth + 1)?;
    let mut out = [0.0; D];
    for i in 0..D {
        out[i] = l[i] + r[i];
    }
    Ok(out)
}
