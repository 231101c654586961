use crate::scalar::Real;

use super::response::{lowpass_poles, ExpResponse};
use super::{DeviceProfile, GateConfig};

/// Ratio below which a decaying pulse tail is dropped.
const TAIL_CUTOFF: f64 = 1e-13;
/// Hard bound on how many following frames one pulse may reach into.
const MAX_TAIL_FRAMES: usize = 1024;

/// Charge-pulse feedthrough for one gate period, in volts per sample.
///
/// Both gate edges are differentiated (coupling time constant of one sample
/// period) and band-limited by the device low-pass cascade. The result is the
/// periodic steady state: frame boundaries join seamlessly and each sample is
/// the average over its sampling interval. The response carries no DC, so the
/// samples sum to zero.
pub fn gate_feedthrough_waveform<T: Real>(gate: &GateConfig<T>, device: &DeviceProfile<T>) -> Vec<T> {
    let n = gate.samples_per_gate;
    let scale = device.feedthrough_gain * gate.gate_amplitude;
    let mut out = vec![T::zero(); n];
    if scale == T::zero() {
        return out;
    }
    let period = T::count(n);
    let width = gate.gate_width_s / gate.sample_period_s();
    let poles = lowpass_poles(&device.transfer_poles, gate.sample_period_s());

    if poles.is_empty() {
        // Pure differentiation: each edge lands entirely in the bin containing it.
        out[0] = out[0] + scale;
        let fall = width.floor().to_usize().unwrap_or(0).min(n - 1);
        out[fall] = out[fall] - scale;
        return out;
    }

    let h = ExpResponse::lowpass_impulse(&poles, T::one());
    for (i, slot) in out.iter_mut().enumerate() {
        let a = T::count(i);
        let b = a + T::one();
        let rise = h.periodic_integral(period, a, b);
        // Falling edge at `width`: same response, shifted and wrapped.
        let (fa, fb) = (a - width, b - width);
        let fall = if fa >= T::zero() {
            h.periodic_integral(period, fa, fb)
        } else if fb <= T::zero() {
            h.periodic_integral(period, fa + period, fb + period)
        } else {
            h.periodic_integral(period, fa + period, period) + h.periodic_integral(period, T::zero(), fb)
        };
        *slot = scale * (rise - fall);
    }
    // AC coupling: strip the rounding-level DC residue.
    let mean = out.iter().copied().sum::<T>() / period;
    for v in &mut out {
        *v = *v - mean;
    }
    out
}

/// An avalanche pulse rendered from the start of its own frame onward.
#[derive(Debug, Clone, PartialEq)]
pub struct AvalanchePulse<T> {
    samples_per_gate: usize,
    samples: Vec<T>,
}

impl<T: Real> AvalanchePulse<T> {
    /// The part that falls inside the frame where the avalanche starts.
    pub fn in_frame(&self) -> &[T] {
        &self.samples[..self.samples_per_gate]
    }

    /// Everything spilling into following frames, concatenated.
    pub fn tail(&self) -> &[T] {
        &self.samples[self.samples_per_gate..]
    }

    /// Number of following frames the tail reaches into.
    pub fn tail_frames(&self) -> usize {
        self.samples.len() / self.samples_per_gate - 1
    }

    /// The slice landing in the `k`-th frame after the onset frame (`k = 0` is the onset frame).
    pub fn frame(&self, k: usize) -> &[T] {
        let n = self.samples_per_gate;
        &self.samples[k * n..(k + 1) * n]
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }
}

/// Shape of one avalanche before amplitude scaling: the filtered exponential in sample units.
pub(crate) fn unit_avalanche_response<T: Real>(gate: &GateConfig<T>, device: &DeviceProfile<T>) -> ExpResponse<T> {
    let dt = gate.sample_period_s();
    let poles = lowpass_poles(&device.transfer_poles, dt);
    ExpResponse::filtered_exponential(&poles, device.avalanche_decay_s / dt, T::one())
}

/// How many frames after the onset frame a pulse of this shape stays above the cutoff.
pub(crate) fn tail_frames_for<T: Real>(shape: &ExpResponse<T>, samples_per_gate: usize) -> usize {
    let rate = shape.slowest_decay();
    let span = T::lit(-TAIL_CUTOFF.ln()) / rate;
    let frames = (span / T::count(samples_per_gate)).ceil().to_usize().unwrap_or(MAX_TAIL_FRAMES);
    frames.clamp(1, MAX_TAIL_FRAMES)
}

/// Fast-rise exponential-decay avalanche starting at `onset_fraction` of the
/// gate period, band-limited by the device response.
///
/// Samples are averages over their sampling interval, so the pulse area in
/// sample units equals `amplitude · decay / sample_period`.
pub fn avalanche_pulse<T: Real>(
    gate: &GateConfig<T>,
    device: &DeviceProfile<T>,
    onset_fraction: T,
    amplitude_v: T,
) -> AvalanchePulse<T> {
    let n = gate.samples_per_gate;
    let shape = unit_avalanche_response(gate, device);
    let frames = 1 + tail_frames_for(&shape, n);
    let mut samples = vec![T::zero(); n * frames];
    if amplitude_v != T::zero() {
        let onset = onset_fraction * T::count(n);
        shape.scaled(amplitude_v).accumulate_bins(-onset, &mut samples);
    }
    AvalanchePulse { samples_per_gate: n, samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unfiltered() -> DeviceProfile<f64> {
        DeviceProfile { transfer_poles: vec![], ..DeviceProfile::default() }
    }

    #[test]
    fn zero_gate_amplitude_gives_zero_waveform() {
        let gate = GateConfig { gate_amplitude: 0.0, ..GateConfig::default() };
        assert!(gate_feedthrough_waveform(&gate, &DeviceProfile::default()).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn feedthrough_has_zero_net_area() {
        let gate = GateConfig::<f64>::default();
        for device in [DeviceProfile::default(), unfiltered()] {
            let w = gate_feedthrough_waveform(&gate, &device);
            let peak = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sum: f64 = w.iter().sum();
            assert!(peak > 0.0);
            assert!(sum.abs() <= 1e-9 * peak * w.len() as f64, "sum {sum}");
        }
    }

    #[test]
    fn feedthrough_is_bipolar() {
        let w = gate_feedthrough_waveform(&GateConfig::<f64>::default(), &DeviceProfile::default());
        assert!(w.iter().any(|v| *v > 0.01));
        assert!(w.iter().any(|v| *v < -0.01));
    }

    #[test]
    fn zero_amplitude_pulse() {
        let p = avalanche_pulse(&GateConfig::<f64>::default(), &DeviceProfile::default(), 0.3, 0.0);
        assert!(p.samples().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn onset_placement() {
        let gate = GateConfig::<f64>::default();
        for device in [DeviceProfile::default(), unfiltered()] {
            let p = avalanche_pulse(&gate, &device, 0.5, 1.0);
            let first = p.samples().iter().position(|v| *v != 0.0).unwrap();
            assert_eq!(first, 8);
        }
    }

    #[test]
    fn unfiltered_pulse_area_matches_closed_form() {
        let gate = GateConfig::<f64>::default();
        let dt = gate.sample_period_s();
        for tau_samples in [4.0, 6.5, 10.0, 25.0] {
            let device = DeviceProfile { avalanche_decay_s: tau_samples * dt, ..unfiltered() };
            let p = avalanche_pulse(&gate, &device, 0.3, 1.0);
            let area: f64 = p.samples().iter().sum();
            let expected = 1.0 * device.avalanche_decay_s / dt;
            assert!((area - expected).abs() <= 0.02 * expected, "tau {tau_samples}: {area} vs {expected}");
        }
    }

    #[test]
    fn tail_plus_frame_is_the_untruncated_pulse() {
        let gate = GateConfig::<f64>::default();
        let device = DeviceProfile::default();
        let p = avalanche_pulse(&gate, &device, 0.4, 0.12);
        let shape = unit_avalanche_response(&gate, &device).scaled(0.12);
        let onset = 0.4 * 16.0;
        let total = p.samples().len();
        for (i, v) in p.in_frame().iter().chain(p.tail()).enumerate() {
            let exact = shape.integral(i as f64 - onset, i as f64 + 1.0 - onset);
            assert!((v - exact).abs() <= 1e-9 * 0.12, "sample {i}");
        }
        // Nothing meaningful is lost beyond the rendered tail.
        let rest = shape.integral(total as f64 - onset, 1e6);
        let area = shape.integral(0.0, 1e6);
        assert!(rest.abs() <= 1e-9 * area);
    }
}
