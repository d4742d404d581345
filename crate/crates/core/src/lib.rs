//! Multiscale stochastic lattice kinetics and its piecewise deterministic limit.
//!
//! Two species live on the unit circle: an abundant one, resolved on a fine
//! lattice of `N` sites where it reacts and diffuses, and a scarce one that is
//! constant on each of `k` coarse blocks ("macrosites") and only jumps.
//! The crate provides
//!
//! * [`ssa`] — an exact event-driven simulator of the scaled jump Markov
//!   process (integer molecule counts, Fenwick-indexed propensities),
//! * [`pdmp`] — a simulator of the limiting piecewise deterministic Markov
//!   process (spectral heat flow + reaction splitting between jumps, jump
//!   times by hazard inversion),
//! * [`analysis`] — ensemble orchestration, distributional distances,
//!   martingale-residual diagnostics, and a resolution ladder that probes the
//!   convergence of the first engine to the second,
//! * [`network`] / [`lattice`] — the validated reaction network and the
//!   discrete geometry (projection, Laplacian, heat semigroup) they share,
//! * [`config`] — the TOML run description consumed by the `multiscale` CLI.

pub mod analysis;
pub mod config;
pub mod lattice;
pub mod network;
pub mod pdmp;
pub mod rng;
pub mod ssa;
pub mod traj;

pub use lattice::{Field, Grid};
pub use network::ReactionNetwork;
