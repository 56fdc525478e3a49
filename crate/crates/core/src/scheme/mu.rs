use alloc::vec::Vec;

use super::{InertiaWeight, PicardGuess, StepSettings};
use crate::error::{Error, Result};
use crate::grid::{cg_solve, Field, FluxOperator, ShiftedFluxOperator};
use crate::nonlin::{ConductivitySpec, PotentialSpec};

#[derive(Clone, Debug)]
pub struct MuStep {
    pub mu: Field,
    pub iterations: usize,
    /// L² distance between the last two Picard iterates.
    pub change: f64,
}

/// Implicit Euler step of the μ-equation with the discrete chain rule
///
/// w (μ⁺ − μ)/h + μ⁺ (g(ρ⁺) − g(ρ))/h − div(κ(μ⁺, ρ⁺)∇μ⁺) = s,
///
/// where w = 1 + 2g at the level selected by [`InertiaWeight`]. κ is frozen at
/// the previous Picard iterate so each pass is one SPD solve with an M-matrix.
#[allow(clippy::too_many_arguments)]
pub fn mu_step(
    mu_prev: &Field,
    rho_prev: &Field,
    rho_next: &Field,
    h: f64,
    spec: &PotentialSpec,
    cond: &ConductivitySpec,
    settings: &StepSettings,
    source: Option<&[f64]>,
) -> Result<MuStep> {
    if let Some(cell) = mu_prev.values().iter().position(|&m| m < -1e-12) {
        return Err(Error::LostPositivity {
            cell,
            detail: alloc::format!("previous mu = {:e} is negative", mu_prev.values()[cell]),
        });
    }
    let grid = *mu_prev.grid();
    let g = &spec.coupling;
    let n = grid.len();

    let mut reaction = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        let (g_old, g_new) = (g.g(rho_prev.values()[i]), g.g(rho_next.values()[i]));
        let w = match settings.inertia {
            InertiaWeight::Previous => 1.0 + 2.0 * g_old,
            InertiaWeight::Current => 1.0 + 2.0 * g_new,
        };
        reaction.push(w + g_new - g_old);
        let mut b = w * mu_prev.values()[i];
        if let Some(s) = source {
            b += h * s[i];
        }
        rhs.push(b);
    }
    if let Some((cell, &a)) = reaction.iter().enumerate().find(|(_, &a)| !(a > 0.0)) {
        return Err(Error::LostPositivity {
            cell,
            detail: alloc::format!("reaction coefficient {a:e} <= 0 breaks the M-matrix condition"),
        });
    }

    let mut iterate: Vec<f64> = match settings.picard.guess {
        PicardGuess::Previous => mu_prev.values().to_vec(),
        PicardGuess::Zero => alloc::vec![0.0; n],
        PicardGuess::Scaled(c) => mu_prev.values().iter().map(|m| c * m).collect(),
    };
    let vol = grid.cell_volume();
    let rho_next = rho_next.values();
    let mut change = f64::INFINITY;
    for iteration in 1..=settings.picard.max_iter {
        let kappa: Vec<f64> = iterate.iter().zip(rho_next).map(|(&m, &r)| cond.kappa(m.max(0.0), r)).collect();
        let flux = FluxOperator::from_cells(grid, &kappa)?;
        let op = ShiftedFluxOperator { flux: &flux, diag: &reaction, scale: h };
        let next = cg_solve(&op, &rhs, Some(&iterate), &settings.cg)?.x;
        change = libm::sqrt(vol * next.iter().zip(&iterate).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        iterate = next;
        if change <= settings.picard.tol {
            if let Some((cell, &m)) = iterate.iter().enumerate().find(|(_, &m)| m < -1e-12) {
                return Err(Error::LostPositivity { cell, detail: alloc::format!("mu+ = {m:e}") });
            }
            return Ok(MuStep { mu: Field::new(grid, iterate)?, iterations: iteration, change });
        }
    }
    Err(Error::PicardNoConvergence { iterations: settings.picard.max_iter, change })
}
