//! Latent ODE base models plus maximum-marginal-likelihood changepoint search
//! for segmenting hybrid trajectories.
//!
//! A hybrid trajectory is a sequence of smooth dynamical flows interrupted by
//! jump discontinuities or switches of dynamical mode. This crate trains a
//! Latent ODE on the smooth flows, scores candidate segments by their
//! importance-sampled marginal likelihood, and searches over all
//! segmentations with optimal partitioning / PELT so that latent dynamics
//! restart exactly where the data demands it.
//!
//! Start with the runnable examples, one per capability:
//!
//! ```text
//! examples/
//! ├── autodiff_basics.rs       # tape-based reverse-mode AD and gradient checks
//! ├── ode_solvers.rs           # Euler / RK4 / Dormand–Prince on Lotka-Volterra
//! ├── generate_data.rs         # sine & Lotka-Volterra hybrid trajectory factories
//! ├── train_sine.rs            # train a small base model on smooth flows
//! ├── marginal_likelihood.rs   # importance-sampled evidence on a conjugate toy
//! ├── segment_trajectory.rs    # PELT + marginal-likelihood cost end to end
//! ├── classic_baselines.rs     # RBF / Gaussian / AR costs with known-k search
//! ├── evaluate_metrics.rs      # Rand index, Hausdorff, F1, annotation error
//! └── benchmark_small.rs       # mini benchmark with report + SVG plots
//! ```
//!
//! Run any of them with `cargo run --release --example <name>`. The same
//! functionality is scriptable through the thin `latsegode` binary
//! (`generate`, `train`, `segment`, `benchmark`, `metrics` subcommands).

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod latent_ode;
pub mod metrics;
pub mod nn;
pub mod ode;
pub mod optim;
pub mod plot;
pub mod rng;
pub mod segmentation;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
