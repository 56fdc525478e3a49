use alloc::vec::Vec;

use super::InitialData;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::nonlin::{BetaMode, ConductivitySpec, PotentialSpec};

/// Right-hand sides added to the two equations, evaluated at cell centers.
pub trait SourceTerms {
    fn rho_source(&self, grid: &Grid, t: f64, out: &mut [f64]);
    fn mu_source(&self, grid: &Grid, t: f64, out: &mut [f64]);
}

/// μ* = μ̄ + a_μ ψ e^{−t}, ρ* = ρ̄ + a_ρ ψ e^{−t} with ψ = Π cos(π x_d / L_d),
/// which satisfies the Neumann condition on any box.
#[derive(Clone, Copy, Debug)]
pub struct ManufacturedSolution {
    pub spec: PotentialSpec,
    pub cond: ConductivitySpec,
    pub beta: BetaMode,
    pub tau: f64,
    pub mu_mean: f64,
    pub mu_amp: f64,
    pub rho_mean: f64,
    pub rho_amp: f64,
}

struct Shape {
    psi: f64,
    grad: [f64; 2],
    /// Δψ / ψ, constant for a product of cosines.
    lap_ratio: f64,
}

fn shape(grid: &Grid, x: [f64; 2]) -> Shape {
    let dim = grid.dim();
    let lengths = grid.lengths();
    let mut cos = [1.0; 2];
    let mut sin = [0.0; 2];
    let mut k = [0.0; 2];
    for d in 0..dim {
        k[d] = core::f64::consts::PI / lengths[d];
        cos[d] = libm::cos(k[d] * x[d]);
        sin[d] = libm::sin(k[d] * x[d]);
    }
    let psi = cos[0] * cos[1];
    let mut grad = [0.0; 2];
    for d in 0..dim {
        let other = if dim == 2 { cos[1 - d] } else { 1.0 };
        grad[d] = -k[d] * sin[d] * other;
    }
    Shape { psi, grad, lap_ratio: -(k[0] * k[0] + k[1] * k[1]) }
}

impl ManufacturedSolution {
    pub fn new(spec: PotentialSpec, cond: ConductivitySpec, beta: BetaMode, tau: f64) -> ManufacturedSolution {
        ManufacturedSolution { spec, cond, beta, tau, mu_mean: 2.0, mu_amp: 1.0, rho_mean: 0.5, rho_amp: 0.25 }
    }

    pub fn exact_mu(&self, grid: &Grid, t: f64) -> Field {
        let e = libm::exp(-t);
        Field::from_vec(*grid, (0..grid.len()).map(|i| self.mu_mean + self.mu_amp * shape(grid, grid.center(i)).psi * e).collect())
    }

    pub fn exact_rho(&self, grid: &Grid, t: f64) -> Field {
        let e = libm::exp(-t);
        Field::from_vec(*grid, (0..grid.len()).map(|i| self.rho_mean + self.rho_amp * shape(grid, grid.center(i)).psi * e).collect())
    }

    pub fn initial_data(&self, grid: &Grid) -> Result<InitialData> {
        if self.mu_mean < self.mu_amp.abs() {
            return Err(Error::InvalidScenario("manufactured mu must stay nonnegative".into()));
        }
        InitialData::new(self.exact_mu(grid, 0.0), self.exact_rho(grid, 0.0), &self.spec.graph)
    }

    fn beta_value(&self, r: f64) -> f64 {
        match self.spec.graph.eval_with_slope(self.beta, r) {
            Ok((b, _)) => b,
            Err(_) => f64::NAN,
        }
    }
}

impl SourceTerms for ManufacturedSolution {
    fn rho_source(&self, grid: &Grid, t: f64, out: &mut [f64]) {
        let e = libm::exp(-t);
        let delayed = if t > self.tau { libm::exp(-(t - self.tau)) } else { 1.0 };
        let g = &self.spec.coupling;
        for (i, o) in out.iter_mut().enumerate() {
            let s = shape(grid, grid.center(i));
            let rho = self.rho_mean + self.rho_amp * s.psi * e;
            let dt_rho = -self.rho_amp * s.psi * e;
            let lap_rho = self.rho_amp * s.lap_ratio * s.psi * e;
            let mu_delayed = self.mu_mean + self.mu_amp * s.psi * delayed;
            *o = dt_rho - lap_rho + self.beta_value(rho) + self.spec.smooth.pi(rho) - mu_delayed * g.gprime(rho);
        }
    }

    fn mu_source(&self, grid: &Grid, t: f64, out: &mut [f64]) {
        let e = libm::exp(-t);
        let g = &self.spec.coupling;
        for (i, o) in out.iter_mut().enumerate() {
            let s = shape(grid, grid.center(i));
            let mu = self.mu_mean + self.mu_amp * s.psi * e;
            let rho = self.rho_mean + self.rho_amp * s.psi * e;
            let dt_mu = -self.mu_amp * s.psi * e;
            let dt_rho = -self.rho_amp * s.psi * e;
            let lap_mu = self.mu_amp * s.lap_ratio * s.psi * e;
            let (k, km, kr) = (self.cond.kappa(mu, rho), self.cond.kappa_m(mu, rho), self.cond.kappa_r(mu, rho));
            let mut transport = k * lap_mu;
            for d in 0..2 {
                let gm = self.mu_amp * s.grad[d] * e;
                let gr = self.rho_amp * s.grad[d] * e;
                transport += (km * gm + kr * gr) * gm;
            }
            *o = (1.0 + 2.0 * g.g(rho)) * dt_mu + mu * g.gprime(rho) * dt_rho - transport;
        }
    }
}

/// Sources stored per time level; looked up by the nearest stored time.
#[derive(Clone, Debug, Default)]
pub struct TabulatedSources {
    pub times: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

impl TabulatedSources {
    fn nearest(&self, t: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &s) in self.times.iter().enumerate() {
            let d = (s - t).abs();
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

impl SourceTerms for TabulatedSources {
    fn rho_source(&self, _grid: &Grid, t: f64, out: &mut [f64]) {
        match self.nearest(t) {
            Some(i) => out.copy_from_slice(&self.rho[i]),
            None => out.fill(0.0),
        }
    }

    fn mu_source(&self, _grid: &Grid, t: f64, out: &mut [f64]) {
        match self.nearest(t) {
            Some(i) => out.copy_from_slice(&self.mu[i]),
            None => out.fill(0.0),
        }
    }
}
