//! Two-regime optimal switching of one-dimensional diffusions via smallest
//! linear majorants, with grid and Monte Carlo oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod fundamentals;
pub mod majorant;
pub mod model;
pub mod noswitch;
pub mod ode;
pub mod oracle;
pub mod presets;
pub mod quadrature;
pub mod roots;
pub mod solver;
pub mod specialfn;
