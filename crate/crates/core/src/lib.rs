//! Myopic non-intersecting Brownian motions in a tilted periodic potential and
//! myopic non-intersecting random walks.
//!
//! The crate is organised bottom-up:
//!
//! * [`potential`]: the tilted periodic potential `v(x) = u(x) - b x` and its derivatives.
//! * [`diffusion`]: Euler–Maruyama integration of `dX = -κ v'(X) dt + dB`, the box
//!   process, Weyl-chamber exits and the metastability experiments.
//! * [`walks`]: lattice walks, Karlin–McGregor determinants, the survival probability
//!   `h_L`, myopic and Vandermonde rates, TASEP/ASEP and non-intersecting walk samplers.
//! * [`myopic`]: conditioned samplers and the segment-gluing constructions of myopic
//!   walks (lattice) and myopic Brownian motions (continuum).
//! * [`analysis`]: Skorohod J1 distance, exponential goodness of fit, ECDF distances,
//!   rate estimates and log-rate regression.
//!
//! All randomness is derived from a 64-bit master seed through labelled streams, see
//! [`stream`].

// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod diffusion;
mod error;
pub mod io;
pub mod myopic;
pub mod potential;
pub mod report;
pub mod stream;
pub mod walks;

pub use error::{Error, Result};
