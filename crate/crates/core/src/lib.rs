//! Simulation and calibration toolkit for a single-junction quantum-circuit
//! refrigerator (QCR) attached to a superconducting quarter-wave resonator.
//!
//! The crate is organized bottom-up:
//!
//! - [`physics`]: Fermi factors, Dynes density of states, the normalized
//!   forward tunneling rate `F(E)` and the NIS current.
//! - [`engine`]: QCR-induced resonator decay rate and effective bath
//!   temperature under dc, rf and pulsed bias.
//! - [`cavity`]: Bose/Poisson/Gibbs statistics, multi-bath mixing and a
//!   birth-death master equation for transient operation.
//! - [`spectroscopy`]: number-splitting spectra of a dispersively coupled
//!   transmon, synthesis and inversion.
//! - [`fit`]: damped least squares and the IV / cooling-curve calibrations.
//! - [`cli`]: configuration, presets and the table-producing commands behind
//!   the `qcrsim` binary.
//!
//! All internal quantities are SI (J, s, K, Ω, V, rad/s). Conversions to the
//! lab units used at the interfaces live in [`units`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fit;
pub mod physics;
pub mod quadrature;
pub mod spectroscopy;
pub mod units;

pub use error::{Error, Result};
