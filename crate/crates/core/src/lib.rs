//! Staged tree models and Bayesian networks for categorical data.

pub mod baselines;
pub mod bn;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod independence;
pub mod inference;
pub mod io;
pub mod learning;
pub mod model;
pub mod parallel;
pub mod synthetic;

pub use error::{Error, Result};
