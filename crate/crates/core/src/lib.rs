//! Ensemble simulator for non-Markovian Gaussian diffusive unravelings of open
//! quantum systems.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod linalg;
pub mod noise;
pub mod novikov;
pub mod output;
pub mod quadrature;
pub mod reference;
pub mod scenarios;
pub mod unraveling;

pub use error::{Error, Result};
