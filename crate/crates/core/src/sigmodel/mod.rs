//! Synthetic gated-APD waveforms.
//!
//! A [`Scenario`] describes the gate drive, one or two APD channels, the ADC
//! and the illumination pattern. [`simulate_gate_train`] turns it into
//! quantized per-gate frames plus ground-truth event labels.

mod io;
pub mod response;
mod simulate;
mod waveform;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::scalar::Real;

pub use io::{read_frames, write_frames, write_ground_truth, FRAME_MAGIC};
pub use simulate::{
    apply_device_variation, plan_events, quantize, render_analog, simulate_gate_train, AnalogComponents, EventPlan,
    GateEvent, Simulation,
};
pub use waveform::{avalanche_pulse, gate_feedthrough_waveform, AvalanchePulse};

/// Gate drive timing.
///
/// The gate pulse is rectangular, rising at the start of each period and
/// falling `gate_width_s` later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct GateConfig<T> {
    pub repetition_hz: T,
    pub gate_amplitude: T,
    pub gate_width_s: T,
    pub samples_per_gate: usize,
}

impl<T: Real> Default for GateConfig<T> {
    fn default() -> Self {
        Self {
            repetition_hz: T::lit(1.0e9),
            gate_amplitude: T::lit(2.0),
            gate_width_s: T::lit(0.5e-9),
            samples_per_gate: 16,
        }
    }
}

impl<T: Real> GateConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.repetition_hz > T::zero()) {
            return Err(config_err("gate.repetition_hz must be > 0"));
        }
        let period = self.repetition_hz.recip();
        if !(self.gate_width_s > T::zero() && self.gate_width_s < period) {
            return Err(config_err("gate.gate_width_s must lie in (0, 1/repetition_hz)"));
        }
        if !self.gate_amplitude.is_finite() {
            return Err(config_err("gate.gate_amplitude must be finite"));
        }
        if self.samples_per_gate < 4 {
            return Err(config_err("gate.samples_per_gate must be >= 4"));
        }
        Ok(())
    }

    pub fn period_s(&self) -> T {
        self.repetition_hz.recip()
    }

    pub fn sample_period_s(&self) -> T {
        self.period_s() / T::count(self.samples_per_gate)
    }
}

/// Per-APD physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct DeviceProfile<T> {
    pub responsivity_a_per_w: T,
    /// Fraction of a gate edge coupled into the output, per sample period of
    /// band-limited differentiation.
    pub feedthrough_gain: T,
    /// `(frequency_hz, damping)` of each second-order low-pass section.
    pub transfer_poles: Vec<(T, T)>,
    pub variation_fraction: T,
    pub avalanche_amp_mean_v: T,
    pub avalanche_amp_sigma_v: T,
    pub avalanche_decay_s: T,
    pub efficiency_eta: T,
    pub dark_prob_per_gate: T,
    pub afterpulse_prob: T,
    pub afterpulse_tau_s: T,
    pub crosstalk_chi: T,
    /// Accepted responsivity band `(min, max)`, A/W.
    pub responsivity_band: (T, T),
}

impl<T: Real> Default for DeviceProfile<T> {
    fn default() -> Self {
        Self {
            responsivity_a_per_w: T::lit(1.03),
            feedthrough_gain: T::lit(0.1),
            transfer_poles: vec![(T::lit(3.0e9), T::lit(0.707))],
            variation_fraction: T::lit(0.1),
            avalanche_amp_mean_v: T::lit(0.1),
            avalanche_amp_sigma_v: T::lit(0.02),
            avalanche_decay_s: T::lit(0.3e-9),
            efficiency_eta: T::lit(0.1),
            dark_prob_per_gate: T::lit(1.0e-4),
            afterpulse_prob: T::zero(),
            afterpulse_tau_s: T::lit(10.0e-9),
            crosstalk_chi: T::zero(),
            responsivity_band: (T::lit(0.5), T::lit(2.0)),
        }
    }
}

fn check_prob<T: Real>(name: &str, p: T) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must lie in [0, 1], got {p}")))
    }
}

impl<T: Real> DeviceProfile<T> {
    pub fn validate(&self) -> Result<()> {
        check_prob("device.efficiency_eta", self.efficiency_eta)?;
        check_prob("device.dark_prob_per_gate", self.dark_prob_per_gate)?;
        check_prob("device.afterpulse_prob", self.afterpulse_prob)?;
        check_prob("device.crosstalk_chi", self.crosstalk_chi)?;
        let (lo, hi) = self.responsivity_band;
        if !(self.responsivity_a_per_w >= lo && self.responsivity_a_per_w <= hi) {
            return Err(config_err(format!(
                "device.responsivity_a_per_w {} outside plausible band [{lo}, {hi}]",
                self.responsivity_a_per_w
            )));
        }
        if !(self.avalanche_decay_s > T::zero()) {
            return Err(config_err("device.avalanche_decay_s must be > 0"));
        }
        if !(self.afterpulse_tau_s > T::zero()) {
            return Err(config_err("device.afterpulse_tau_s must be > 0"));
        }
        if !(self.variation_fraction >= T::zero()) {
            return Err(config_err("device.variation_fraction must be >= 0"));
        }
        if !(self.avalanche_amp_sigma_v >= T::zero()) || !self.avalanche_amp_mean_v.is_finite() {
            return Err(config_err("device avalanche amplitude law must be finite with sigma >= 0"));
        }
        if !self.feedthrough_gain.is_finite() {
            return Err(config_err("device.feedthrough_gain must be finite"));
        }
        for &(f, d) in &self.transfer_poles {
            if !(f > T::zero() && d > T::zero()) || !f.is_finite() || !d.is_finite() {
                return Err(config_err("device.transfer_poles need frequency > 0 and damping > 0"));
            }
        }
        Ok(())
    }
}

/// ADC transfer: `code = round((v - offset_v) / full_scale_v · (2^bits - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct AdcConfig<T> {
    pub bits: u32,
    pub full_scale_v: T,
    pub offset_v: T,
}

impl<T: Real> Default for AdcConfig<T> {
    /// 8 bits spanning four nominal avalanche amplitudes, centred on zero.
    fn default() -> Self {
        Self { bits: 8, full_scale_v: T::lit(0.4), offset_v: T::lit(-0.2) }
    }
}

impl<T: Real> AdcConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(2..=16).contains(&self.bits) {
            return Err(config_err("adc.bits must lie in [2, 16]"));
        }
        if !(self.full_scale_v > T::zero()) || !self.full_scale_v.is_finite() {
            return Err(config_err("adc.full_scale_v must be > 0"));
        }
        if !self.offset_v.is_finite() {
            return Err(config_err("adc.offset_v must be finite"));
        }
        Ok(())
    }

    pub fn max_code(&self) -> u16 {
        ((1u32 << self.bits) - 1) as u16
    }

    /// Volts per code step.
    pub fn lsb(&self) -> T {
        self.full_scale_v / T::count(self.max_code() as usize)
    }

    pub fn dequantize(&self, code: u16) -> T {
        self.offset_v + self.lsb() * T::count(code as usize)
    }
}

/// Which gates are illuminated and with how many photons.
///
/// With `mu` absent a lit gate carries exactly one photon; with `mu` present
/// the photon number is Poisson distributed with that mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields, bound = "T: Real")]
pub enum Illumination<T> {
    AllLit {
        #[serde(default)]
        mu: Option<T>,
    },
    AllDark,
    /// Even gate indices lit, odd ones dark.
    Alternating {
        #[serde(default)]
        mu: Option<T>,
    },
    /// Every gate lit with a Poisson photon number.
    Poisson {
        mu: T,
    },
}

impl<T: Real> Default for Illumination<T> {
    fn default() -> Self {
        Illumination::Alternating { mu: None }
    }
}

impl<T: Real> Illumination<T> {
    pub fn is_lit(&self, gate_index: u64) -> bool {
        match self {
            Illumination::AllLit { .. } | Illumination::Poisson { .. } => true,
            Illumination::AllDark => false,
            Illumination::Alternating { .. } => gate_index.is_multiple_of(2),
        }
    }

    /// Mean photon number of a lit gate, `None` for exactly one photon.
    pub fn poisson_mu(&self) -> Option<T> {
        match self {
            Illumination::AllLit { mu } | Illumination::Alternating { mu } => *mu,
            Illumination::Poisson { mu } => Some(*mu),
            Illumination::AllDark => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.poisson_mu() {
            Some(mu) if !(mu >= T::zero()) || !mu.is_finite() => {
                Err(config_err("illumination.mu must be finite and >= 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Complete description of one synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct Scenario<T> {
    pub gate: GateConfig<T>,
    /// One or two device profiles.
    pub devices: Vec<DeviceProfile<T>>,
    /// Number of channels; defaults to `devices.len()`. Two channels from a
    /// single profile derive both devices through [`apply_device_variation`].
    pub channels: Option<usize>,
    pub adc: AdcConfig<T>,
    pub illumination: Illumination<T>,
    pub noise_sigma_v: T,
    pub n_gates: u64,
    pub seed: u64,
    /// Avalanche onset drawn uniformly in this fraction-of-period range.
    pub onset_window: (T, T),
}

impl<T: Real> Default for Scenario<T> {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            devices: vec![DeviceProfile::default()],
            channels: None,
            adc: AdcConfig::default(),
            illumination: Illumination::default(),
            noise_sigma_v: T::lit(0.002),
            n_gates: 100_000,
            seed: 1,
            onset_window: (T::lit(0.25), T::lit(0.45)),
        }
    }
}

impl<T: Real> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        self.gate.validate()?;
        self.adc.validate()?;
        self.illumination.validate()?;
        if self.devices.is_empty() || self.devices.len() > 2 {
            return Err(config_err("scenario.devices must hold one or two profiles"));
        }
        for d in &self.devices {
            d.validate()?;
        }
        let channels = self.channel_count();
        if channels == 0 || channels > 2 || channels < self.devices.len() {
            return Err(config_err("scenario.channels must be 1 or 2 and cover every device"));
        }
        if self.n_gates == 0 {
            return Err(config_err("scenario.n_gates must be >= 1"));
        }
        if !(self.noise_sigma_v >= T::zero()) || !self.noise_sigma_v.is_finite() {
            return Err(config_err("scenario.noise_sigma_v must be >= 0"));
        }
        let (lo, hi) = self.onset_window;
        if !(lo >= T::zero() && lo <= hi && hi < T::one()) {
            return Err(config_err("scenario.onset_window must satisfy 0 <= lo <= hi < 1"));
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        self.channels.unwrap_or(self.devices.len())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }
}

/// One gate period of ADC codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledFrame {
    pub gate_index: u64,
    pub channel: u8,
    pub samples: Vec<u16>,
}

/// Borrowed view of one frame inside a [`FrameStream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameRef<'a> {
    pub gate_index: u64,
    pub channel: u8,
    pub samples: &'a [u16],
}

impl FrameRef<'_> {
    pub fn to_owned(&self) -> SampledFrame {
        SampledFrame { gate_index: self.gate_index, channel: self.channel, samples: self.samples.to_vec() }
    }
}

/// All frames of one channel, stored contiguously, gate 0 first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameStream {
    pub channel: u8,
    pub samples_per_gate: usize,
    pub bits: u32,
    pub codes: Vec<u16>,
}

impl FrameStream {
    pub fn n_gates(&self) -> usize {
        self.codes.len().checked_div(self.samples_per_gate).unwrap_or(0)
    }

    pub fn frame(&self, gate: usize) -> FrameRef<'_> {
        let n = self.samples_per_gate;
        FrameRef { gate_index: gate as u64, channel: self.channel, samples: &self.codes[gate * n..(gate + 1) * n] }
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = FrameRef<'_>> + '_ {
        (0..self.n_gates()).map(move |g| self.frame(g))
    }

    /// Checksum of the frame contents, stable within one build.
    pub fn checksum(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.samples_per_gate.hash(&mut h);
        self.bits.hash(&mut h);
        self.codes.hash(&mut h);
        h.finish()
    }
}

/// Why an avalanche pulse is present in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    Photon,
    Dark,
    Afterpulse,
    /// No avalanche of its own; the frame carries the other channel's pulse.
    Crosstalk,
    None,
}

impl Cause {
    pub fn as_str(&self) -> &'static str {
        match self {
            Cause::Photon => "photon",
            Cause::Dark => "dark",
            Cause::Afterpulse => "afterpulse",
            Cause::Crosstalk => "crosstalk",
            Cause::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateTruth {
    pub gate_index: u64,
    pub photon_present: bool,
    pub avalanche: bool,
    pub cause: Cause,
}

/// Ground-truth labels for one channel.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    pub channel: u8,
    pub records: Vec<GateTruth>,
}

impl GroundTruth {
    pub fn count(&self, cause: Cause) -> usize {
        self.records.iter().filter(|r| r.cause == cause).count()
    }
}
