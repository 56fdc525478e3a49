use super::{DelayConfig, InitialData};
use crate::error::Result;
use crate::grid::{Field, Grid};
use crate::nonlin::{ConductivitySpec, Coupling, PotentialSpec, ScalarGraph, SmoothPart};

/// Closed-form initial profiles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// mean + amp · Π cos(m_d π x_d / L_d).
    Cosine { mean: f64, amp: f64, modes: [u32; 2] },
}

impl Profile {
    pub fn field(&self, grid: &Grid) -> Field {
        match *self {
            Profile::Constant(v) => Field::constant(*grid, v),
            Profile::Cosine { mean, amp, modes } => {
                let lengths = [grid.lengths()[0], grid.lengths().get(1).copied().unwrap_or(1.0)];
                let dim = grid.dim();
                Field::from_fn(*grid, |x| {
                    let mut p = 1.0;
                    for d in 0..dim {
                        p *= libm::cos(modes[d] as f64 * core::f64::consts::PI * x[d] / lengths[d]);
                    }
                    mean + amp * p
                })
            }
        }
    }
}

/// A complete problem: time discretization, data and nonlinearities.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: DelayConfig,
    pub data: InitialData,
    pub spec: PotentialSpec,
    pub cond: ConductivitySpec,
}

impl Scenario {
    /// Logarithmic β (c = 1), f₂ = 3ρ(1 − ρ), g = smoothed identity (δ = 0.1),
    /// demo κ, T = 0.25, N = 16, M = 4, μ₀ = 1 + ½ψ₁₁, ρ₀ = ½ + 0.3ψ₂₁.
    pub fn default_on(grid: Grid) -> Result<Scenario> {
        let spec = PotentialSpec::new(
            ScalarGraph::Log { c: 1.0 },
            SmoothPart::DoubleWell { a: 3.0 },
            Coupling::SmoothIdentity { delta: 0.1 },
        )?;
        let mu0 = DEFAULT_MU0.field(&grid);
        let rho0 = DEFAULT_RHO0.field(&grid);
        let data = InitialData::new(mu0, rho0, &spec.graph)?;
        Ok(Scenario { config: DelayConfig::new(0.25, 16, 4), data, spec, cond: ConductivitySpec::demo() })
    }
}

pub const DEFAULT_MU0: Profile = Profile::Cosine { mean: 1.0, amp: 0.5, modes: [1, 1] };
pub const DEFAULT_RHO0: Profile = Profile::Cosine { mean: 0.5, amp: 0.3, modes: [2, 1] };
