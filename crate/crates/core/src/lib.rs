//! Model-agnostic uncertainty quantification for classifiers.
//!
//! Two measurement frameworks share one currency, the row-stochastic
//! probability matrix:
//!
//! * [`conformal`]: inductive conformal prediction. Calibrate a score
//!   quantile on held-out data, then emit label sets with guaranteed
//!   marginal coverage.
//! * [`mcdropout`]: Monte-Carlo dropout. Average stochastic forward passes
//!   and split predictive entropy into expected entropy and mutual
//!   information.
//!
//! Around them sit [`calibration`] (ECE, confusion matrices), [`sparsity`]
//! (global magnitude-threshold diagnostics), [`compare`] (set size versus
//! entropy) and [`mininet`], a small dropout MLP that produces real
//! stochastic passes so the whole [`pipeline`] runs without external models.

pub mod calibration;
pub mod cli;
pub mod compare;
pub mod conformal;
pub mod data;
pub mod error;
pub mod mcdropout;
pub mod mininet;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod sparsity;
pub mod synthetic;

pub use error::{Result, UqError};
