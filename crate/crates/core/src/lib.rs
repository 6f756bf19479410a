//! Forward models and inversions for single-NV pulsed spin experiments.
//!
//! Covers the NV ground-state Hamiltonian and field inversion, CPMG echo
//! modulation by nearby nuclei, DEER signals from coupled electron spins,
//! bounded least-squares fit recipes with spin-count selection, and a
//! shot-noise synthesizer that produces traces in the same format real data
//! would use.
//!
//! Units: mT, MHz, μs, nm and radians. Model evaluation uses angular
//! frequencies in rad/μs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod deer;
pub mod error;
pub mod eseem;
pub mod fitting;
pub mod hamiltonian;
pub mod spin;
pub mod synth;
pub mod trace;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use trace::{SignalView, Trace, XKind};
