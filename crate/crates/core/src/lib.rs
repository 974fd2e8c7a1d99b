//! Numerical conic pseudo-Finsler geometry: connection and curvature from a
//! Lagrangian, geodesics and Jacobi fields, focal points, and index forms of
//! the energy functional with submanifold endpoint conditions.

// Index loops mirror the tensor formulas; `!(a >= b)` comparisons deliberately catch NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod connection;
pub mod curves;
pub mod error;
pub mod expr;
pub mod indexform;
pub mod jacobi;
pub mod jets;
pub mod metric;
pub mod ode;
pub mod submanifold;

pub use error::{Error, Result};
