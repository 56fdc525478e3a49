//! Time-delay approximation solver for the viscous Cahn–Hilliard system
//!
//! ```text
//! (1 + 2g(ρ)) ∂ₜμ + μ g'(ρ) ∂ₜρ − div(κ(μ,ρ)∇μ) = 0
//! ∂ₜρ − Δρ + ξ + π(ρ) = μ g'(ρ),   ξ ∈ β(ρ)
//! ```
//!
//! with homogeneous Neumann conditions on a box, together with runtime audits of
//! the discrete energy estimates the scheme is expected to satisfy.
//!
//! The crate is `no_std` (it needs `alloc`); file formats, configuration and the
//! command-line front end live in the `delaych` crate.
#![cfg_attr(not(test), no_std)]
// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod estimates;
pub mod grid;
pub mod nonlin;
pub mod scheme;

pub use error::{Error, Result};
pub use grid::{Field, Grid};
