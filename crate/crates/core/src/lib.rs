//! Equilibrium construction and simulation for a cheap-talk game between
//! an expert, a quack and a judge.

pub mod engine;
pub mod error;
pub mod ext_struct;
pub mod ext_variants;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rules;

pub use error::{Error, Result};
