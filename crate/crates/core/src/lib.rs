//! Corrected Brownian approximations for boundary crossing problems.
//!
//! A random walk `S_k` scaled by `1/sqrt(n)` crosses a smooth boundary
//! `b(t)` close to where the limiting Brownian motion does, and expectations
//! of the crossing time and place converge to their Brownian counterparts.
//! This crate computes the `1/sqrt(n)` correction to that limit — a skewness
//! term driven by `EX^3` and an overshoot term driven by the ladder-height
//! constant `rho` — and validates the expansion against Monte Carlo and
//! discrete-recursion oracles.
//!
//! Module map:
//! - [`model`]: boundaries, payoffs, increment distributions.
//! - [`pde`]: Crank-Nicolson Feynman-Kac solver on the moving domain.
//! - [`walk`]: random-walk crossing simulation and the Brownian oracle.
//! - [`fluctuation`]: ladder-variable simulation for `rho` and `H`.
//! - [`expansion`]: assembly of the corrected approximation and diagnostics.
//! - [`report`]: provenance-hashed CSV/JSON artifacts and the field cache.
//! - [`config`]: experiment configuration schema.
//! - [`acceptance`]: the end-to-end validation suite.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod expansion;
pub mod fluctuation;
pub mod model;
pub mod pde;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
