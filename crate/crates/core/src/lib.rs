//! Streaming LMS adaptive noise cancellation for pulsed readout signals.
//!
//! This crate simulates, in software, an FPGA-style adaptive-filter readout
//! chain: a pulsed signal source, a loopback channel with ADC quantization,
//! an ensemble-average reference builder, a streaming LMS core that runs on
//! either exact `f64` arithmetic or a saturating fixed-point datapath, a
//! frame synchronizer, and SNR / convergence / latency metrics.
//!
//! The processing topology per pulse is
//!
//! ```text
//! source --> channel --> x ----------------+--> LMS (y = w*x, e = d - y) --> metrics
//!                        |                 |
//!                        +--> ensemble --> d (frame-synchronized with x)
//! ```
//!
//! with LMS filter state and the ensemble average persisting across pulses,
//! so the pulse train is processed as one continuous sample stream.

pub mod arith;
pub mod chain;
pub mod cli;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod lms;
pub mod metrics;
pub mod signal;
pub mod sync;

pub use error::Error;

/// Identifier of the noise-generation PRNG scheme, recorded in every run
/// report so a run can be reproduced by any implementation of the same
/// scheme: per-pulse ChaCha8 stream keyed by SplitMix64 from `(seed, k)`,
/// Gaussian variates by Box-Muller on 53-bit uniforms.
pub const PRNG_ID: &str = "chacha8-splitmix64-boxmuller-v1";

/// Version string echoed into reports and file headers.
pub const SPEC_VERSION: &str = env!("CARGO_PKG_VERSION");
