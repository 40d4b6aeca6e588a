//! Empirical-Bayes multiple testing in the sparse Gaussian sequence model
//!
//! Observations follow X_i = θ_i + ε_i with ε_i ~ N(0,1) and θ mostly zero.
//! Each coordinate gets a spike-and-slab prior (1−w)δ₀ + w·γ, where γ is a
//! heavy-tailed slab density, and the spike weight w is calibrated by marginal
//! maximum likelihood. The library provides:
//!
//! * the slab marginal g = γ⋆φ, its tail Ḡ, and the likelihood ratio β = g/φ − 1
//!   for the quasi-Cauchy and Laplace slabs ([`prior`]),
//! * posterior null probabilities per coordinate: ℓ-values (local fdr),
//!   q-values (tail-based), and m-values (marginal credible intervals)
//!   ([`procedures`]),
//! * the MMLE weight estimate ŵ over [1/n, 1] via the monotone score
//!   function ([`weight`]),
//! * the pseudo-thresholds ξ, ζ, χ that convert value-thresholding into
//!   |X|-thresholding ([`thresholds`]),
//! * score moments m̃, m₁, m₂, the strong-signal weight w*, and the SC
//!   diagnostic fₙ ([`moments`]),
//! * multiple-testing procedures (ℓ/q/m thresholding, sum-of-ℓ SC rule,
//!   BH, Bonferroni and hybrids) with FDR/FNR bookkeeping ([`metrics`]),
//! * a deterministic, worker-count-independent Monte Carlo engine ([`sim`]).
//!
//! The `slabtest` binary exposes analyze / simulate / curves / diagnose
//! subcommands on top of these pieces.

pub mod cli;
pub mod error;
pub mod metrics;
pub mod moments;
pub mod prior;
pub mod procedures;
pub mod quad;
pub mod rng;
pub mod sim;
pub mod stdnorm;
pub mod thresholds;
pub mod weight;

pub use error::{Error, Result};

/// Version string embedded in output headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
