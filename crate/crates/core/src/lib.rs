pub mod aa;
pub mod baselines;
pub mod bb;
pub mod cgapa;
pub mod difpa;
pub mod error;
pub mod harness;
pub mod logapprox;
pub mod metrics;
pub mod minpower;
pub mod topology;

pub use error::{Error, Result};
