use crate::error::{Error, Result};

use super::quadrature;

/// Relative tolerance of the K-family quadrature.
pub const K_QUADRATURE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub struct CustomConductivity {
    pub kappa: fn(f64, f64) -> f64,
    pub kappa_r: fn(f64, f64) -> f64,
    pub kappa_rr: fn(f64, f64) -> f64,
}

#[derive(Clone, Copy, Debug)]
pub enum ConductivityLaw {
    Constant(f64),
    /// κ(m, r) = 1 + ½ e^{−m} cos² r.
    DemoExpCos,
    Custom(CustomConductivity),
}

/// K(m,r) = ∫₀ᵐ κ(s,r) ds and its r-derivatives K₁, K₂.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KFamily {
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
}

/// State-dependent conductivity κ(m, r) with bounds κ_* ≤ κ ≤ κ*.
///
/// κ is only defined for m ≥ 0; negative m is clamped to 0, which realizes the
/// extension to negative arguments the scheme needs while μ ≥ 0 is maintained.
#[derive(Clone, Copy, Debug)]
pub struct ConductivitySpec {
    pub law: ConductivityLaw,
    pub kmin: f64,
    pub kmax: f64,
}

impl ConductivitySpec {
    pub fn constant(value: f64) -> ConductivitySpec {
        ConductivitySpec { law: ConductivityLaw::Constant(value), kmin: value, kmax: value }
    }

    pub fn demo() -> ConductivitySpec {
        ConductivitySpec { law: ConductivityLaw::DemoExpCos, kmin: 1.0, kmax: 1.5 }
    }

    pub fn from_name(name: &str, value: f64) -> Option<ConductivitySpec> {
        match name {
            "const" => Some(Self::constant(value)),
            "demo_exp_cos" => Some(Self::demo()),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.law {
            ConductivityLaw::Constant(_) => "const",
            ConductivityLaw::DemoExpCos => "demo_exp_cos",
            ConductivityLaw::Custom(_) => "custom",
        }
    }

    pub fn kappa(&self, m: f64, r: f64) -> f64 {
        let m = m.max(0.0);
        match self.law {
            ConductivityLaw::Constant(k) => k,
            ConductivityLaw::DemoExpCos => {
                let c = libm::cos(r);
                1.0 + 0.5 * libm::exp(-m) * c * c
            }
            ConductivityLaw::Custom(c) => (c.kappa)(m, r),
        }
    }

    /// ∂κ/∂m, needed to build manufactured sources.
    pub fn kappa_m(&self, m: f64, r: f64) -> f64 {
        match self.law {
            ConductivityLaw::Constant(_) => 0.0,
            ConductivityLaw::DemoExpCos => {
                let c = libm::cos(r);
                if m < 0.0 {
                    0.0
                } else {
                    -0.5 * libm::exp(-m) * c * c
                }
            }
            ConductivityLaw::Custom(c) => {
                let d = 1e-6 * (1.0 + m.abs());
                let lo = (m - d).max(0.0);
                ((c.kappa)(m + d, r) - (c.kappa)(lo, r)) / (m + d - lo)
            }
        }
    }

    pub fn kappa_r(&self, m: f64, r: f64) -> f64 {
        let m = m.max(0.0);
        match self.law {
            ConductivityLaw::Constant(_) => 0.0,
            ConductivityLaw::DemoExpCos => -0.5 * libm::exp(-m) * libm::sin(2.0 * r),
            ConductivityLaw::Custom(c) => (c.kappa_r)(m, r),
        }
    }

    pub fn kappa_rr(&self, m: f64, r: f64) -> f64 {
        let m = m.max(0.0);
        match self.law {
            ConductivityLaw::Constant(_) => 0.0,
            ConductivityLaw::DemoExpCos => -libm::exp(-m) * libm::cos(2.0 * r),
            ConductivityLaw::Custom(c) => (c.kappa_rr)(m, r),
        }
    }

    /// Closed-form K family, when the law provides one.
    pub fn closed_form_k(&self, m: f64, r: f64) -> Option<KFamily> {
        match self.law {
            ConductivityLaw::Constant(k) => Some(KFamily { k: k * m, k1: 0.0, k2: 0.0 }),
            ConductivityLaw::DemoExpCos => {
                let decay = -libm::expm1(-m);
                let c = libm::cos(r);
                Some(KFamily {
                    k: m + 0.5 * decay * c * c,
                    k1: -0.5 * decay * libm::sin(2.0 * r),
                    k2: -decay * libm::cos(2.0 * r),
                })
            }
            ConductivityLaw::Custom(_) => None,
        }
    }

    /// K, K₁, K₂ at (m, r): closed form when available, quadrature otherwise.
    pub fn k_family(&self, m: f64, r: f64) -> Result<KFamily> {
        if !(m >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("K family needs m >= 0, got {m}")));
        }
        match self.closed_form_k(m, r) {
            Some(k) => Ok(k),
            None => self.k_family_quadrature(m, r),
        }
    }

    /// K family by adaptive Gauss–Legendre quadrature, ignoring any closed form.
    pub fn k_family_quadrature(&self, m: f64, r: f64) -> Result<KFamily> {
        if !(m >= 0.0) {
            return Err(Error::InvalidParameter(alloc::format!("K family needs m >= 0, got {m}")));
        }
        let [k, k1, k2] = quadrature::integrate(
            |s| [self.kappa(s, r), self.kappa_r(s, r), self.kappa_rr(s, r)],
            0.0,
            m,
            K_QUADRATURE_TOL,
            1e-15 * self.kmax * m.max(1.0),
        )?;
        Ok(KFamily { k, k1, k2 })
    }

    /// Checks κ_* > 0 and κ_* ≤ κ ≤ κ*, |∂ᵣκ|, |∂ᵣ²κ| ≤ κ* on a sample lattice.
    pub fn validate(&self) -> Result<()> {
        if !(self.kmin > 0.0 && self.kmin <= self.kmax && self.kmax.is_finite()) {
            return Err(Error::InvalidParameter(alloc::format!(
                "conductivity bounds must satisfy 0 < kmin <= kmax, got ({}, {})",
                self.kmin,
                self.kmax
            )));
        }
        let tol = 1e-12;
        for i in 0..=40 {
            let m = 0.25 * i as f64;
            for j in -40..=40 {
                let r = 0.1 * j as f64;
                let (k, kr, krr) = (self.kappa(m, r), self.kappa_r(m, r), self.kappa_rr(m, r));
                if k < self.kmin - tol || k > self.kmax + tol || kr.abs() > self.kmax + tol || krr.abs() > self.kmax + tol {
                    return Err(Error::InvalidParameter(alloc::format!(
                        "conductivity {} violates its bounds at (m, r) = ({m}, {r})",
                        self.name()
                    )));
                }
            }
        }
        Ok(())
    }
}
