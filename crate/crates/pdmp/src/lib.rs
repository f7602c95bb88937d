//! Piecewise deterministic Monte Carlo on spectrally truncated Hilbert spaces.
//!
//! The crate simulates piecewise deterministic Markov processes (PDMPs) —
//! Zig-Zag, Bouncy Particle and Boomerang samplers — targeting Gibbs measures
//! `exp(-Φ)` relative to a Gaussian reference `N(0, Σ)` with diagonal
//! covariance in a fixed eigenbasis.  Everything lives at an explicit finite
//! truncation `N`; the diagnostics study the behaviour as `N` grows.
//!
//! Module map:
//! - [`spectral`]: eigenvalue sequences, Gaussian reference measures,
//!   Karhunen–Loève sampling, Hurwitz zeta tails.
//! - [`targets`]: potentials Φ with gradients and growth constants
//!   (quadratic, diffusion-bridge, projections).
//! - [`engine`]: the generic PDMP machinery — flows, thinned event times,
//!   trajectory skeletons, arc quadrature.
//! - [`samplers`]: concrete sampler assemblies (rates, reflections,
//!   refreshments) and their truncated approximants.
//! - [`diagnostics`]: batch-means variance, generator-invariance residuals,
//!   decay-rate fits, approximation-error studies, tuning formulas.
//! - [`config`]: the flat `[section] key=value` experiment configuration
//!   consumed by the `pdmp` binary.

pub mod config;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod quad;
pub mod rng;
pub mod samplers;
pub mod spectral;
pub mod targets;

pub use error::PdmpError;
