//! Gain and saturation modeling for flux-pumped Josephson parametric
//! converters (JPCs), including the fourth-order Kerr nonlinearities that
//! dominate saturation in three-wave-mixing amplifiers.
//!
//! The crate is organized in four layers:
//!
//! - [`circuit`] — derives operating-point parameters (mode frequencies,
//!   three-wave coupling `g`, the Kerr matrix, participation ratios) from
//!   physical circuit values, and exposes the exact Josephson ring modulator
//!   potential together with a finite-difference expansion oracle that
//!   validates every truncated coefficient against it.
//! - [`linear`] — the closed-form third-order (stiff-pump, Kerr-free)
//!   response: complex reflection/transmission, peak-gain detuning, and the
//!   gain-vs-pump-power law with its fitting inverse.
//! - [`kerr`] — the fourth-order self-consistent response: small-signal
//!   closed form, Kerr-shifted peak-gain detuning, and the finite-signal
//!   nonlinear solution with continuation, fold detection, and a
//!   brute-force fixed-point-map scan for branch verification.
//! - [`analysis`] — measurement protocols built on the solvers: gain-target
//!   bias finding, saturation curves with P±1dB extraction, optimal-bias
//!   identification, transmission amplitude/phase maps, and Kerr-scaling
//!   studies.
//!
//! [`config`] and [`cli`] provide the JSON run-configuration schema and the
//! subcommand front end used by the `jpc-kerr` binary; the `examples/`
//! directory has one runnable example per capability.
//!
//! Internally every frequency-like quantity is angular (rad/s). Cycles
//! (GHz/MHz), dBm, and flux quanta appear only at the configuration
//! boundary.

pub mod analysis;
pub mod circuit;
pub mod cli;
pub mod config;
pub mod kerr;
pub mod linear;
pub mod units;

pub use circuit::{derive_mode_params, CircuitSpec, KerrMatrix, ModeParams};


