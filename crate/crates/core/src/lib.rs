//! Certified solvers for square nonlinear systems whose Jacobians are merely
//! continuous.
//!
//! Classical convergence theory for Newton-type methods leans on Lipschitz
//! (or stronger) regularity of the Jacobian. This crate implements three
//! procedures whose guarantees need only a modulus of continuity `ω` for
//! `F′` near a solution:
//!
//! - a frozen-Jacobian contraction iteration with factor `q`,
//! - continuous Newton: the flow `u̇ = −[F′(u)]⁻¹(F(u) − h)`, integrated
//!   directly and tracked via an exponential residual homotopy,
//! - the discrete Newton iteration with certified rate `q₁ = q/(1−q)`.
//!
//! Every guarantee is quantitative. The [`certify`] module turns a problem
//! into a [`certify::Certificate`] `(m, q, R, ρ)`; the [`bounds`] module
//! re-checks each certified inequality on actual solver traces and reports
//! violations as data rather than panics.

pub mod bounds;
pub mod certify;
pub mod linalg;
pub mod problem;
pub mod sampling;
pub mod solvers;
pub mod trace_io;
