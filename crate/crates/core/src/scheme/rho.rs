use alloc::vec;
use alloc::vec::Vec;

use super::StepSettings;
use crate::error::{Error, Result};
use crate::grid::{cg_solve, Field, FluxOperator, ShiftedFluxOperator};
use crate::nonlin::{BetaMode, PotentialSpec};

#[derive(Clone, Debug)]
pub struct RhoStep {
    pub rho: Field,
    /// β_ε(ρ⁺) (or β(ρ⁺) in exact mode).
    pub xi: Field,
    /// Volume-weighted L² norm of the final nonlinear residual.
    pub residual: f64,
    pub iterations: usize,
}

struct Residual {
    values: Vec<f64>,
    xi: Vec<f64>,
    jacobian_diag: Vec<f64>,
    norm: f64,
}

struct Problem<'a> {
    prev: &'a [f64],
    mu_delayed: &'a [f64],
    source: Option<&'a [f64]>,
    h: f64,
    spec: &'a PotentialSpec,
    mode: BetaMode,
    lap: FluxOperator,
    vol: f64,
}

impl Problem<'_> {
    /// (ρ − ρ_prev)/h − Δρ + β(ρ) + π(ρ) − μ_d g'(ρ) − s, and the diagonal of its Jacobian.
    fn residual(&self, rho: &[f64]) -> Result<Residual> {
        let n = rho.len();
        let mut values = vec![0.0; n];
        self.lap.apply(rho, &mut values);
        let mut xi = vec![0.0; n];
        let mut jacobian_diag = vec![0.0; n];
        let coupling = &self.spec.coupling;
        let smooth = &self.spec.smooth;
        let mut sum = 0.0;
        for i in 0..n {
            let r = rho[i];
            let (b, db) = self.spec.graph.eval_with_slope(self.mode, r)?;
            let md = self.mu_delayed[i];
            let mut v = (r - self.prev[i]) / self.h - values[i] + b + smooth.pi(r) - md * coupling.gprime(r);
            if let Some(s) = self.source {
                v -= s[i];
            }
            values[i] = v;
            xi[i] = b;
            jacobian_diag[i] = 1.0 / self.h + db + smooth.pi_slope(r) - md * coupling.gsecond(r);
            sum += v * v;
        }
        let norm = libm::sqrt(self.vol * sum);
        if !norm.is_finite() {
            return Err(Error::NewtonNoConvergence { iterations: 0, residual: norm });
        }
        Ok(Residual { values, xi, jacobian_diag, norm })
    }

    /// Largest step along `dir` keeping ρ strictly inside D(β) in exact mode.
    fn max_feasible_step(&self, rho: &[f64], dir: &[f64]) -> f64 {
        if self.mode != BetaMode::Exact {
            return 1.0;
        }
        let (lo, hi) = self.spec.graph.domain();
        let mut alpha: f64 = 1.0;
        for (&r, &d) in rho.iter().zip(dir) {
            if d < 0.0 && lo.is_finite() {
                alpha = alpha.min(0.99 * (r - lo) / -d);
            } else if d > 0.0 && hi.is_finite() {
                alpha = alpha.min(0.99 * (hi - r) / d);
            }
        }
        alpha
    }
}

/// Implicit Euler step of the delayed phase-field equation,
///
/// (ρ⁺ − ρ)/h − Δρ⁺ + β_ε(ρ⁺) + π(ρ⁺) = μ_d g'(ρ⁺) (+ s),
///
/// by damped semismooth Newton with a backtracking line search on the residual.
pub fn rho_step(
    rho_prev: &Field,
    mu_delayed: &Field,
    h: f64,
    spec: &PotentialSpec,
    settings: &StepSettings,
    source: Option<&[f64]>,
) -> Result<RhoStep> {
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(alloc::format!("time step must be positive, got {h}")));
    }
    let grid = *rho_prev.grid();
    let problem = Problem {
        prev: rho_prev.values(),
        mu_delayed: mu_delayed.values(),
        source,
        h,
        spec,
        mode: settings.beta,
        lap: FluxOperator::unit(grid),
        vol: grid.cell_volume(),
    };
    let newton = settings.newton;

    let mut rho = rho_prev.values().to_vec();
    if settings.beta == BetaMode::Exact {
        let (lo, hi) = spec.graph.domain();
        if rho.iter().any(|&r| !(r > lo && r < hi)) {
            return Err(Error::InvalidScenario("exact beta mode needs rho strictly inside D(beta)".into()));
        }
    }
    let mut current = problem.residual(&rho)?;
    let mut dir = vec![0.0; rho.len()];
    let mut trial = vec![0.0; rho.len()];
    for iteration in 0..newton.max_iter {
        if current.norm <= newton.tol {
            return Ok(finish(grid, rho, current, iteration));
        }
        let jacobian = ShiftedFluxOperator { flux: &problem.lap, diag: &current.jacobian_diag, scale: 1.0 };
        let rhs: Vec<f64> = current.values.iter().map(|v| -v).collect();
        let step = cg_solve(&jacobian, &rhs, None, &settings.cg).map_err(|e| match e {
            Error::CgBreakdown { .. } => Error::IndefiniteJacobian,
            other => other,
        })?;
        dir.copy_from_slice(&step.x);

        let mut alpha = newton.damping.min(problem.max_feasible_step(&rho, &dir));
        let accepted = loop {
            for i in 0..rho.len() {
                trial[i] = rho[i] + alpha * dir[i];
            }
            let candidate = problem.residual(&trial);
            if let Ok(candidate) = candidate {
                if candidate.norm <= (1.0 - 1e-4 * alpha) * current.norm {
                    break Some(candidate);
                }
            }
            alpha *= 0.5;
            if alpha < 1e-10 {
                break None;
            }
        };
        match accepted {
            Some(next) => {
                core::mem::swap(&mut rho, &mut trial);
                current = next;
            }
            None => {
                return Err(Error::NewtonNoConvergence { iterations: iteration + 1, residual: current.norm });
            }
        }
    }
    if current.norm <= newton.tol {
        return Ok(finish(grid, rho, current, newton.max_iter));
    }
    Err(Error::NewtonNoConvergence { iterations: newton.max_iter, residual: current.norm })
}

fn finish(grid: crate::grid::Grid, rho: Vec<f64>, res: Residual, iterations: usize) -> RhoStep {
    RhoStep {
        rho: Field::from_vec(grid, rho),
        xi: Field::from_vec(grid, res.xi),
        residual: res.norm,
        iterations,
    }
}
