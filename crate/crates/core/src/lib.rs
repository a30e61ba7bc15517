//! Variational integrators for the linearized dynamics of complex bodies.
//!
//! A complex body carries, besides the macroscopic displacement `u`, a
//! morphological descriptor field `nu` valued in an embedded linear space
//! R^k, with its own inertia and a zeroth-order internal dissipation
//! `eta * nu_dot`. This crate discretizes the body with piecewise-linear
//! simplicial finite elements and lumped nodal coefficients, and integrates
//! the resulting nodal balance equations in time with
//!
//! * an asynchronous variational integrator ([`avi`]), where each element
//!   owns its own ordered time set and applies explicit velocity kicks to
//!   its nodes, and
//! * a synchronous variational integrator ([`sync`]), explicit in `u` and
//!   implicit in `nu` through a strongly monotone per-step map.
//!
//! A dense matrix-exponential oracle ([`oracle`]) provides exact reference
//! solutions for fully quadratic problems, and [`diagnostics`] measures
//! energies, discrete action sums, pointwise variation of the rates, and
//! empirical convergence orders.

pub mod assembly;
pub mod avi;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod material;
pub mod mesh;
pub mod oracle;
pub mod state;
pub mod sync;
pub mod timeset;
pub mod validate;

pub use error::Error;
