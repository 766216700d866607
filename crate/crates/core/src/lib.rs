//! Kerr resonator with one- and two-photon driving and dissipation.
//!
//! The crate is organised around the physics it computes:
//!
//! * [`fock`]: truncated Fock-space states, ladder/parity/displacement
//!   operators and the rotating-frame Hamiltonian.
//! * [`exact`]: the closed-form steady state, its correlation functions and
//!   its Wigner function.
//! * [`master`]: Lindblad dynamics (adaptive Runge–Kutta and exponential
//!   propagation), the parity-selective feedback channel, Liouvillian null
//!   vectors and the Uhlmann fidelity.
//! * [`trajectory`]: photon-counting quantum-jump trajectories and ensembles.
//! * [`analysis`]: spectral decomposition, cat-state fits and numeric Wigner
//!   functions.
//!
//! All quantities use ħ = 1. Energies and rates are given in units of the
//! two-photon loss rate η.

// `!(x >= 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod exact;
pub mod fock;
pub mod linalg;
pub mod master;
pub mod trajectory;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, OperatorMatrix, Parity, StateVector, SystemParams};
pub use linalg::C64;
