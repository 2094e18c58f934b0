//! Numerical verification of first-exit estimates for Brownian motion near
//! domain boundaries, Riesz capacities of boundary singular sets, and the
//! reflected Ornstein-Uhlenbeck decomposition on path space.

pub mod brownian;
pub mod capacity;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod mcverify;
pub mod quadrature;
pub mod reflect;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
