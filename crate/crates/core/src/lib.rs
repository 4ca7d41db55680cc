//! Box-relaxation detection of BPSK signals from Gaussian linear measurements.
//!
//! * [`model`]: the measurement model and seeded instance generation.
//! * [`boxsolve`]: the relaxed least-squares decoder, sign detection, BER and
//!   brute-force oracles.
//! * [`theory`]: the asymptotic error probability `Q(1/τ*)` and companions.
//! * [`ao_sim`]: the decoupled auxiliary problem, solved per Gaussian sample.
//! * [`montecarlo`]: seeded trials, aggregation and theory comparison.
//! * [`cli`]: the `boxrelax` command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ao_sim;
pub mod boxsolve;
pub mod cli;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod search;
pub mod theory;

pub use error::{Error, Result};
