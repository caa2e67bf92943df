//! Continuous-variable entanglement relays built from optomechanical sources.
//!
//! The pipeline runs from a device description to a teleportation fidelity:
//! [`entangler`] computes the covariance matrix of two filtered output modes,
//! [`relay`] swaps entanglement along a chain of such sources with homodyne
//! Bell measurements, and [`teleport`] scores the resulting channel. All
//! states are two-mode Gaussian states ([`gaussian`]). [`scenario`] reads
//! scenario files and runs parameter sweeps.
//!
//! The guide in `book/` walks through each stage with runnable examples.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod entangler;
pub mod error;
pub mod gaussian;
pub mod quadrature;
pub mod relay;
pub mod scenario;
pub mod teleport;

pub use error::{Error, Result};

// The guide's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gaussian-states.md")]
    mod gaussian_states {}
    #[doc = include_str!("../../../book/src/entangler.md")]
    mod entangler {}
    #[doc = include_str!("../../../book/src/swapping.md")]
    mod swapping {}
    #[doc = include_str!("../../../book/src/teleportation.md")]
    mod teleportation {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    mod conventions {}
}
