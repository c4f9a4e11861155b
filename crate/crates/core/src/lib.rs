// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiscale change-point segmentation with false discovery rate control.
//!
//! The crate is organised around the estimation pipeline:
//!
//! * [`signal`] builds piecewise-constant test signals and samples noisy
//!   observations (iid or low-pass filtered Gaussian noise).
//! * [`multiscale`] evaluates the scale-calibrated multiscale statistic and the
//!   band of constants a segment admits under it.
//! * [`quantiles`] simulates and stores the local (per segment length) and
//!   global null quantiles that calibrate the statistic.
//! * [`segmenter`] solves for the minimal number of change-points with a
//!   pruned dynamic program and fits the constrained least-squares levels
//!   (`fdrseg`, `smuce`, `dfdrseg`, plus a brute-force oracle).
//! * [`evaluation`] scores estimates (false discoveries, location error,
//!   integrated squared error, V-measure) and estimates the noise level.
//! * [`experiments`] runs the simulation studies and writes metric CSVs.
//! * [`cli`] wires everything into the `fdrseg` command-line tool.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod multiscale;
pub mod quantiles;
pub mod rng;
pub mod segmenter;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};
pub use multiscale::{feasible_band, penalty, segment_cost, statistic, statistic_global, Band, PrefixSums};
pub use quantiles::{NoiseDescriptor, QuantileTable};
pub use segmenter::{brute_force_segment, dfdrseg, fdrseg, smuce, Calibration, Method, Segmentation};
pub use signal::{LowpassKernel, NoiseModel, StepFunction};

/// FDR bound `2α/(1-α)` guaranteed for a local level `alpha`.
pub fn fdr_bound(alpha: f64) -> f64 {
    2.0 * alpha / (1.0 - alpha)
}

/// Local level `α = β/(2+β)` that guarantees an FDR of at most `beta`.
pub fn alpha_for_fdr(beta: f64) -> f64 {
    beta / (2.0 + beta)
}

/// Global level whose family-wise coverage matches `K+1` independent
/// segments each covered with probability `1-α`.
pub fn equivalent_global_level(alpha: f64, num_changes: usize) -> f64 {
    1.0 - (1.0 - alpha).powi(num_changes as i32 + 1)
}
