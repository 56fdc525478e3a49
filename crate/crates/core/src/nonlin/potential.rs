use crate::error::{Error, Result};

use super::ScalarGraph;

/// The smooth, possibly nonconvex part f₂ of the potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SmoothPart {
    /// f₂(ρ) = aρ(1 − ρ).
    DoubleWell { a: f64 },
    /// f₂(ρ) = aρ²/2.
    Quadratic { a: f64 },
    Zero,
}

impl SmoothPart {
    pub fn value(&self, rho: f64) -> f64 {
        match *self {
            SmoothPart::DoubleWell { a } => a * rho * (1.0 - rho),
            SmoothPart::Quadratic { a } => 0.5 * a * rho * rho,
            SmoothPart::Zero => 0.0,
        }
    }

    /// π = f₂'.
    pub fn pi(&self, rho: f64) -> f64 {
        match *self {
            SmoothPart::DoubleWell { a } => a * (1.0 - 2.0 * rho),
            SmoothPart::Quadratic { a } => a * rho,
            SmoothPart::Zero => 0.0,
        }
    }

    pub fn pi_slope(&self, _rho: f64) -> f64 {
        match *self {
            SmoothPart::DoubleWell { a } => -2.0 * a,
            SmoothPart::Quadratic { a } => a,
            SmoothPart::Zero => 0.0,
        }
    }

    pub fn pi_lipschitz(&self) -> f64 {
        match *self {
            SmoothPart::DoubleWell { a } => 2.0 * a.abs(),
            SmoothPart::Quadratic { a } => a.abs(),
            SmoothPart::Zero => 0.0,
        }
    }
}

/// The nonnegative coupling function g.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    /// g(ρ) = ½(ρ + √(ρ² + δ²)): a smooth nonnegative extension of g(ρ) = ρ.
    SmoothIdentity { delta: f64 },
    Const { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingValues {
    pub g: f64,
    pub gprime: f64,
    pub pi: f64,
}

impl Coupling {
    pub fn from_name(name: &str, param: f64) -> Option<Coupling> {
        match name {
            "smooth_id" => Some(Coupling::SmoothIdentity { delta: param }),
            "const" => Some(Coupling::Const { value: param }),
            _ => None,
        }
    }

    pub fn g(&self, rho: f64) -> f64 {
        match *self {
            Coupling::SmoothIdentity { delta } => 0.5 * (rho + libm::hypot(rho, delta)),
            Coupling::Const { value } => value,
        }
    }

    pub fn gprime(&self, rho: f64) -> f64 {
        match *self {
            Coupling::SmoothIdentity { delta } => 0.5 * (1.0 + rho / libm::hypot(rho, delta)),
            Coupling::Const { .. } => 0.0,
        }
    }

    pub fn gsecond(&self, rho: f64) -> f64 {
        match *self {
            Coupling::SmoothIdentity { delta } => {
                let r = libm::hypot(rho, delta);
                0.5 * delta * delta / (r * r * r)
            }
            Coupling::Const { .. } => 0.0,
        }
    }

    /// Lipschitz constant of g (equivalently sup |g'|).
    pub fn g_lipschitz(&self) -> f64 {
        match *self {
            Coupling::SmoothIdentity { .. } => 1.0,
            Coupling::Const { .. } => 0.0,
        }
    }

    /// Lipschitz constant of g' (sup |g''|).
    pub fn gprime_lipschitz(&self) -> f64 {
        match *self {
            Coupling::SmoothIdentity { delta } => 0.5 / delta.abs(),
            Coupling::Const { .. } => 0.0,
        }
    }
}

/// Bundle of f₁ (through β), f₂ and g.
#[derive(Clone, Copy, Debug)]
pub struct PotentialSpec {
    pub graph: ScalarGraph,
    pub smooth: SmoothPart,
    pub coupling: Coupling,
}

impl PotentialSpec {
    pub fn new(graph: ScalarGraph, smooth: SmoothPart, coupling: Coupling) -> Result<PotentialSpec> {
        let spec = PotentialSpec { graph, smooth, coupling };
        spec.validate()?;
        Ok(spec)
    }

    pub fn f1(&self, x: f64) -> f64 {
        self.graph.f1(x)
    }

    pub fn f2(&self, x: f64) -> f64 {
        self.smooth.value(x)
    }

    pub fn coupling(&self, rho: f64) -> CouplingValues {
        CouplingValues { g: self.coupling.g(rho), gprime: self.coupling.gprime(rho), pi: self.smooth.pi(rho) }
    }

    /// Checks the structural assumptions on a sample lattice: f₁ ≥ 0 on its
    /// domain, g ≥ 0, and the declared Lipschitz constants of π, g, g'.
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        let bad = |msg: alloc::string::String| Err(Error::InvalidParameter(msg));
        match self.coupling {
            Coupling::SmoothIdentity { delta } if !(delta > 0.0 && delta.is_finite()) => {
                return bad(alloc::format!("coupling delta must be positive, got {delta}"))
            }
            Coupling::Const { value } if !(value >= 0.0 && value.is_finite()) => {
                return bad(alloc::format!("constant coupling must be nonnegative, got {value}"))
            }
            _ => {}
        }

        let (lo, hi) = self.graph.domain();
        let (lo, hi) = (lo.max(-10.0), hi.min(10.0));
        let samples = 401;
        for i in 0..samples {
            let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            let f1 = self.f1(x);
            if !(f1 >= -1e-12) {
                return bad(alloc::format!("f1({x}) = {f1} is negative"));
            }
        }

        let tol = 1e-9;
        let (pl, gl, gpl) = (self.smooth.pi_lipschitz(), self.coupling.g_lipschitz(), self.coupling.gprime_lipschitz());
        let mut prev: Option<(f64, f64, f64, f64)> = None;
        for i in 0..samples {
            let x = -10.0 + 20.0 * i as f64 / (samples - 1) as f64;
            let (pi, g, gp) = (self.smooth.pi(x), self.coupling.g(x), self.coupling.gprime(x));
            if g < 0.0 {
                return bad(alloc::format!("g({x}) = {g} is negative"));
            }
            if let Some((px, ppi, pg, pgp)) = prev {
                let dx = x - px;
                if (pi - ppi).abs() > pl * dx + tol
                    || (g - pg).abs() > gl * dx + tol
                    || (gp - pgp).abs() > gpl * dx + tol
                {
                    return bad(alloc::format!("declared Lipschitz bound violated near {x}"));
                }
            }
            prev = Some((x, pi, g, gp));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_examples() {
        let g = Coupling::SmoothIdentity { delta: 0.1 };
        assert!((g.g(0.0) - 0.05).abs() < 1e-15);
        for i in -200..=200 {
            let rho = i as f64 * 0.05;
            let gp = g.gprime(rho);
            assert!(gp > 0.0 && gp < 1.0, "g'({rho}) = {gp}");
        }
        let well = SmoothPart::DoubleWell { a: 3.0 };
        assert_eq!(well.pi(0.5), 0.0);
    }

    #[test]
    fn derivatives_consistent() {
        let g = Coupling::SmoothIdentity { delta: 0.1 };
        for &x in &[-1.0, -0.05, 0.0, 0.2, 0.9] {
            let d = 1e-6;
            assert!(((g.g(x + d) - g.g(x - d)) / (2.0 * d) - g.gprime(x)).abs() < 1e-7);
            assert!(((g.gprime(x + d) - g.gprime(x - d)) / (2.0 * d) - g.gsecond(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn default_spec_is_admissible() {
        let spec = PotentialSpec::new(
            ScalarGraph::Log { c: 1.0 },
            SmoothPart::DoubleWell { a: 3.0 },
            Coupling::SmoothIdentity { delta: 0.1 },
        );
        assert!(spec.is_ok());
        let negative = PotentialSpec::new(ScalarGraph::Zero, SmoothPart::Zero, Coupling::Const { value: -1.0 });
        assert!(negative.is_err());
    }
}
