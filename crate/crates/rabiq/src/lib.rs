//! Simulation and tomography toolkit for a parametrically engineered quantum
//! Rabi model driven through its superradiant phase transition.
//!
//! The crate is organized in layers:
//!
//! * [`hilbert`] — truncated Fock/qubit operator algebra, special functions.
//! * [`model`] — lab-frame, sideband, effective-Rabi and calibration
//!   Hamiltonians, the quench schedule and analytic ground states.
//! * [`dynamics`] — unitary and Lindblad time evolution, quench drivers.
//! * [`tomography`] — ancilla Rabi signals, photon-distribution fits, Wigner
//!   and Q functions, constrained density-matrix reconstruction.
//! * [`analysis`] — nonclassical volume, order-parameter peaks, phase scans,
//!   fidelity.
//!
//! Everything is generic over the scalar type through [`Real`] (implemented
//! for `f32` and `f64`); the `*64` aliases below fix the intended
//! double-precision instantiation.
//!
//! Unit conventions: angular frequencies in rad/µs, times in µs. With these
//! units a linear frequency of 1 MHz is `2π·1` rad/µs and decay rates are
//! 1/µs. Front ends that accept MHz/µs convert at their boundary.

pub mod analysis;
pub mod dynamics;
mod error;
pub mod hilbert;
pub mod model;
pub(crate) mod optimize;
mod real;
pub mod tomography;

pub use error::{Error, Result};
pub use real::Real;

/// Double-precision aliases for the core types.
pub type OperatorMatrix64 = hilbert::OperatorMatrix<f64>;
pub type StateVector64 = hilbert::StateVector<f64>;
pub type DensityMatrix64 = hilbert::DensityMatrix<f64>;
pub type DriveParams64 = model::DriveParams<f64>;
pub type EffectiveParams64 = model::EffectiveParams<f64>;
pub type QuenchSchedule64 = model::QuenchSchedule<f64>;
pub type StarkParams64 = model::StarkParams<f64>;
pub type LindbladSpec64 = dynamics::LindbladSpec<f64>;
pub type EvolutionResult64 = dynamics::EvolutionResult<f64>;
pub type FitConfig64 = tomography::FitConfig<f64>;
pub type PhotonDistribution64 = tomography::PhotonDistribution<f64>;
pub type RabiSignal64 = tomography::RabiSignal<f64>;
pub type PhaseGrid64 = tomography::PhaseGrid<f64>;
pub type WignerGrid64 = tomography::WignerGrid<f64>;
pub type QGrid64 = tomography::QGrid<f64>;
pub type PeakPair64 = analysis::PeakPair<f64>;
pub type PhaseScanResult64 = analysis::PhaseScanResult<f64>;
