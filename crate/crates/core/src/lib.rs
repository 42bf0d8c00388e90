//! The Skellam mechanism for distributed differential privacy.
//!
//! The crate covers the whole path from sampling to accounting to a simulated
//! secure-aggregation deployment:
//!
//! - [`skellam`] and [`poisson`]: exact sampling, log-space pmf and the numeric
//!   Renyi divergence, on top of the log-space Bessel functions in [`bessel`].
//! - [`rdp`]: closed-form RDP bounds, composition, conversion to `(eps, delta)`
//!   and variance calibration.
//! - [`pld`]: privacy loss distributions with FFT composition and the analytic
//!   Gaussian mechanism.
//! - [`quantize`] and [`secagg`]: clipping, randomized Hadamard rotation,
//!   conditional rounding, local noising and the modular-sum aggregation.
//! - [`dme`] and [`verify`]: the mean-estimation harness and the numeric
//!   self-checks used by the `skellam` binary.
//!
//! All randomness is drawn from streams derived in [`rng`].

pub mod bessel;
pub mod dme;
pub mod error;
pub mod pld;
pub mod poisson;
pub mod quantize;
pub mod rdp;
pub mod rng;
pub mod secagg;
pub mod skellam;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
