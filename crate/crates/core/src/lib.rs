//! Generalised connections over a vector bundle map.
//!
//! An anchored bundle `(N, ν, ρ)` is a vector bundle `N → M` with a bundle map
//! `ρ: N → TM` over the identity. A ρ-connection on a bundle `π: E → M` lifts
//! elements of `N` to tangent vectors on `E`, compatibly with `ρ`. This crate
//! works entirely in local coordinates: anchors, connection coefficients and
//! structure functions are coefficient fields on a coordinate box, and every
//! operation is a pointwise evaluation built on [`chart`].
//!
//! Module map:
//!
//! * [`chart`]: coordinate boxes, dual numbers, scalar/matrix/vector fields and
//!   their derivatives, Lie brackets.
//! * [`expr`]: the coefficient-field expression language.
//! * [`linalg`]: numerical rank, kernels and subspace arithmetic for small
//!   dense matrices.
//! * [`bundle`]: anchored bundles, admissible curves, fiber rank and kernel.
//! * [`connection`]: general and linear ρ-connections, h-lifts, the vertical
//!   defect and connection map, the coordinate transformation law and the
//!   partial-connection tests.
//! * [`transport`]: the lift ODE and parallel transport.
//! * [`derivative`]: the derivative operator and its relatives.
//! * [`prelie`]: pre-Lie structures, curvature, torsion, Nijenhuis brackets.
//! * [`gallery`]: ready-made anchored bundles and connections.

pub mod bundle;
pub mod chart;
pub mod connection;
pub mod derivative;
pub mod error;
pub mod expr;
pub mod gallery;
pub mod linalg;
pub mod prelie;
pub mod sampling;
pub mod section;
pub mod transport;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
