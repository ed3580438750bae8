//! Brownian motion, guided bridges and bridge-based density estimates on
//! matrix Lie groups and their homogeneous quotients.
//!
//! `no_std` with `alloc`. Parallel execution is pluggable through
//! [`exec::Executor`]; the default runs sequentially.
#![no_std]

extern crate alloc;

pub mod error;
pub mod estimators;
pub mod exec;
pub mod fiber;
mod float;
pub mod lie;
pub mod linalg;
pub mod metric;
pub mod rng;
pub mod sde;
pub mod spaces;
pub mod vector;

pub use error::{Error, Result, Warning};
pub use metric::MetricParam;
pub use vector::{AlgebraVector, MAX_DIM};
