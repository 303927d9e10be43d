//! Deterministic equivalents and Gaussian fluctuations of the SINR at the
//! output of an LMMSE receiver, for large random channel matrices whose
//! entries follow a variance profile.
//!
//! The crate is organised bottom-up:
//!
//! - [`profiles`] builds variance profiles for the supported channel models
//!   (i.i.d., MIMO Kronecker, CDMA, MC-CDMA up/downlink) and checks the
//!   regularity assumptions the asymptotics rely on.
//! - [`detsolve`] solves the `N + K` fixed-point system at `z = -rho` and
//!   yields the deterministic SINR approximation `beta_bar`.
//! - [`fluctuations`] computes the CLT variance `theta^2`, its separable
//!   counterpart `omega^2`, a structural certificate and outage levels.
//! - [`montecarlo`] samples channels, evaluates the exact SINR and produces
//!   the empirical statistics used to validate the approximations.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod detsolve;
mod error;
pub mod fluctuations;
pub mod montecarlo;
pub mod profiles;

pub use error::{Error, Result};
