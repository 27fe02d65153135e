//! Electric network frequency (ENF) extraction from noisy audio.
//!
//! The crate is organised along the processing chain:
//!
//! * [`model`] — signal containers, synthetic ENF generation, SNR arithmetic
//!   and frame geometry.
//! * [`preprocess`] — decimation, the multi-band comb filter and framing.
//! * [`spectral`] — zero-padded periodograms evaluated with a chirp-z
//!   transform, per-harmonic peak tracking and IF interpolation.
//! * [`enhancement`] — harmonic robust filtering (HRFA): per-harmonic
//!   enhancement through a sinusoidal-FM encoding and kernel phase averaging.
//! * [`selection`] — graph-based harmonic selection (GHSA): correlation
//!   graph, Bron-Kerbosch maximal cliques and maximum average-weight clique.
//! * [`estimators`] — single-tone, MLE and weighted MLE fundamental
//!   estimators and the ten composed estimation schemes.
//! * [`eval`] — Cramér-Rao bound, error metrics, Monte Carlo harness and a
//!   brute-force clique oracle.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod enhancement;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod model;
pub mod preprocess;
pub mod rng;
pub mod selection;
pub mod spectral;

pub use enhancement::{EdgeMode, EnhancedSignal, EnhancerConfig};
pub use error::{EnfError, Result};
pub use estimators::{PipelineParams, SchemeId, SchemeOutput, SchemeRunner, WeightMatrix};
pub use eval::{crlb, monte_carlo, mse_nmse, Scenario, TrialReport};
pub use model::{FrameConfig, HarmonicModelSpec, HarmonicTag, IfSeries, SampleBuffer};
pub use preprocess::CombFilterSpec;
pub use selection::{CliqueSelection, HarmonicGraph};
pub use spectral::Periodogram;

/// Nominal grid frequency in Hz.
pub const NOMINAL_HZ: f64 = 50.0;

/// Tight per-harmonic search band at fundamental scale, in Hz.
pub const SEARCH_BAND_HZ: (f64, f64) = (49.9, 50.1);

/// Loose per-harmonic band at fundamental scale, in Hz.
pub const LOOSE_BAND_HZ: (f64, f64) = (49.0, 51.0);

/// Default harmonic set, the fundamental omitted.
pub const DEFAULT_HARMONICS: [u32; 6] = [2, 3, 4, 5, 6, 7];
