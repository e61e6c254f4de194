//! Computational laboratory for random interlacements on the lattice `Z^d`, d >= 3.
//!
//! The crate is organized around the objects that appear in the interlacement
//! model and its percolation analysis:
//!
//! * [`green`] — the lattice Green function of simple random walk, evaluated
//!   through a one-dimensional Bessel-product integral, with a slow Fourier
//!   quadrature kept as an independent reference route.
//! * [`potential`] — equilibrium measures, capacities, hitting probabilities
//!   and the exact vacancy laws they induce.
//! * [`sampler`] — Poisson clouds of labeled random-walk trajectories
//!   restricted to a finite window; produces per-site minimal covering labels
//!   so one realization yields every intensity level at once.
//! * [`percolation`] — cluster labeling, box and planar-slice crossing events,
//!   connectivity proxies and threshold bracketing.
//! * [`renorm`] — the exact integer scale sequence, intensity level tracks and
//!   the inductive recursion checks.
//! * [`bounds`] — exponential moment bounds for occupation functionals and the
//!   dimension conditions they imply.
//!
//! All Monte Carlo entry points take explicit seeds and are deterministic for
//! a fixed seed, including under the optional `parallel` feature.

pub mod bounds;
mod error;
pub mod green;
pub mod lattice;
pub mod percolation;
pub mod potential;
pub mod renorm;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
