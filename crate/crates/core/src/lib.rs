//! Simulation of a laser-driven optomechanical cavity–cantilever system from
//! the classical limit into the quantum regime.
//!
//! * [`classical`]: mean-field equations, attractors and the power-balance chart.
//! * [`master`]: Lindblad master equation on a truncated two-mode Fock space.
//! * [`qsd`]: quantum-state-diffusion trajectories and ensembles.
//! * [`observables`]: Wigner functions, autocorrelations and uncertainty diagnostics.
//! * [`config`], [`runner`], [`playbook`] and [`io`]: run configurations, figure
//!   presets and output files.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classical;
pub mod config;
pub mod error;
pub mod io;
pub mod master;
pub mod model;
pub mod observables;
pub mod ode;
pub mod playbook;
pub mod qsd;
pub mod runner;
pub mod sparse;

pub use error::{Error, ErrorKind, Result};
pub use model::{DerivedCouplings, FockConfig, ModelParams, OperatorSet};
