//! Separable neural architectures with B-spline sub-atoms.
//!
//! The crate covers univariate spline bases ([`splines`]), CP-class and
//! general interaction models ([`model`]), supervised fitting
//! ([`training`]), target inversion ([`inversion`]), tensor-native
//! variational solvers ([`variational`]) and the benchmark generators
//! ([`bench`]).

// `!(a <= b)` rejects NaN along with out-of-order values; index loops mirror
// the tensor notation in the numerical kernels.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod error;
pub mod inversion;
pub mod quadrature;
pub mod model;
pub mod optim;
pub mod rng;
pub mod splines;
pub mod training;
pub mod variational;

pub use error::{Error, Result};
