//! Numerical first-order averaging for T-periodic discontinuous piecewise
//! differential systems
//!
//! ```text
//! x' = F0(t,x) + eps*F1(t,x) + eps^2*R(t,x,eps)
//! ```
//!
//! with the right-hand side selected by sign patterns of switching
//! functions. The crate integrates such systems with event-located zone
//! crossings, computes the variational quantities along unperturbed
//! orbits, evaluates the averaged function `f1` over a manifold of
//! periodic orbits and verifies predicted limit cycles by shooting.

pub mod exprlang;
pub mod model;
pub mod flow;
pub mod variational;
pub mod averaging;
pub mod shooting;
