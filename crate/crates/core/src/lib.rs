// Dense numerical kernels index several arrays with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod jets;
pub mod linalg;
pub mod family;
pub mod quadrature;
pub mod metric;
pub mod bergman;
pub mod curvature;
pub mod positivity;
pub mod cli;
