//! Gated-mode single-photon avalanche detector toolkit.
//!
//! * [`sigmodel`] synthesizes per-gate ADC frames with charge-pulse
//!   feedthrough, avalanches, noise and crosstalk.
//! * [`compensator`] is the self-training charge-pulse compensator and
//!   threshold discriminator.
//! * [`charstats`] estimates detection efficiency and dark-count probability
//!   and sweeps the discrimination level.
//! * [`keyrate`] evaluates gain, QBER and the Shor–Preskill key rate.
//! * [`hwbudget`] holds the bond-wire bandwidth and wiring heat-load calculators.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod rng;
pub mod scalar;
pub mod sigmodel;

pub use error::{Error, Result};
pub use scalar::Real;
pub use sigmodel::{Cause, FrameRef, FrameStream, GateTruth, GroundTruth, SampledFrame};

pub type GateConfig = sigmodel::GateConfig<f64>;
pub type DeviceProfile = sigmodel::DeviceProfile<f64>;
pub type AdcConfig = sigmodel::AdcConfig<f64>;
pub type Illumination = sigmodel::Illumination<f64>;
pub type Scenario = sigmodel::Scenario<f64>;
pub type Simulation = sigmodel::Simulation<f64>;
pub mod compensator;

pub type CompensatorConfig = compensator::CompensatorConfig<f64>;
pub type CompensatorState = compensator::CompensatorState<f64>;
pub type CompensatorState32 = compensator::CompensatorState<f32>;
pub type Decision = compensator::Decision<f64>;
pub mod charstats;
pub mod keyrate;

pub type SweepResult = charstats::SweepResult<f64>;
pub type SweepRow = charstats::SweepRow<f64>;
pub type KeyRateParams = keyrate::KeyRateParams<f64>;
pub mod hwbudget;

pub type RfLinkSpec = hwbudget::RfLinkSpec<f64>;
pub type WireSpec = hwbudget::WireSpec<f64>;
