//! Nonlinearities: the maximal monotone graph β = ∂f₁, the smooth part f₂,
//! the coupling g and the conductivity κ, plus resolvent and Yosida machinery.

mod conductivity;
mod graph;
mod potential;
pub mod quadrature;

pub use conductivity::{ConductivityLaw, ConductivitySpec, CustomConductivity, KFamily};
pub use graph::{BetaMode, CustomGraph, ScalarGraph, RESOLVENT_MAX_ITER, RESOLVENT_TOL};
pub use potential::{Coupling, CouplingValues, PotentialSpec, SmoothPart};

/// Logistic function, evaluated without overflow.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// σ(z)(1 − σ(z)) without cancellation.
pub(crate) fn sigmoid_slope(z: f64) -> f64 {
    let e = libm::exp(-z.abs());
    e / ((1.0 + e) * (1.0 + e))
}
