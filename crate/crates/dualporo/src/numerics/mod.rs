//! Shared numerical kernels: quadrature, monotone interpolation tables, and
//! small deterministic sparse solvers.

pub mod quad;
pub mod sparse;
pub mod table;
