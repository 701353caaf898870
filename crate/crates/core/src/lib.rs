//! Diffusions interacting through a random coupling matrix.
//!
//! The crate simulates `N`-dimensional linear stochastic differential systems
//! whose couplings are drawn from random-matrix ensembles, evaluates averaged
//! polynomial observables along trajectories, and cross-checks ensemble
//! universality with an exact generator (stochastic Taylor) expansion that
//! works on symbolic monomials in the coupling entries.
//!
//! Module map:
//!
//! - [`ensembles`]: entry laws, variance profiles, coupling matrices, initial laws.
//! - [`sde`]: system parameters, Euler–Maruyama integration, closed-form means.
//! - [`observables`]: building blocks, quadratic/tensor observables, localization.
//! - [`generator`]: symbolic monomials, generator letters, moment oracles, series.
//! - [`experiments`]: paired-ensemble studies and the spin-glass applications.
//! - [`config`], [`io`], [`runner`]: configuration files, CSV output, orchestration.

pub mod config;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod observables;
pub mod rng;
pub mod runner;
pub mod sde;

pub use error::{Error, Result};
pub use rng::{Purpose, RngStream};
