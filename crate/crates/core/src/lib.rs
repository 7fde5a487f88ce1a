//! Exact tabular toolkit for undiscounted total-reward MDPs.
//!
//! States are split into recurrent and transient classes, policies are
//! evaluated through the fundamental matrix `(I - T^pi)^{-1}`, and two
//! policy-gradient solvers (projected and natural) run on exact gradients.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod cli;
pub mod environments;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod format;
pub mod gradient;
pub mod iterate;
pub mod mdp;
pub mod npg;
pub mod ppg;

pub use nalgebra;

pub use error::{Error, Result};
pub use mdp::{MdpSpec, Policy, StateActionTable};
