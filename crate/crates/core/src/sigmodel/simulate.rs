use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{config_err, Result};
use crate::rng::{stream, Purpose};
use crate::scalar::Real;

use super::response::ExpResponse;
use super::waveform::{gate_feedthrough_waveform, tail_frames_for, unit_avalanche_response};
use super::{AdcConfig, Cause, DeviceProfile, FrameStream, GateTruth, GroundTruth, Scenario};

/// Perturbs every transfer-pole parameter and the feedthrough gain by an
/// independent factor `1 + u`, `u ~ U[-variation_fraction, +variation_fraction]`.
pub fn apply_device_variation<T: Real>(base: &DeviceProfile<T>, seed: u64) -> DeviceProfile<T> {
    let spread = base.variation_fraction.as_f64();
    if spread == 0.0 {
        return base.clone();
    }
    let mut rng = stream(seed, Purpose::DeviceVariation, 0, 0);
    let mut factor = || T::lit(1.0 + rng.random_range(-spread..=spread));
    let mut out = base.clone();
    for (freq, damping) in &mut out.transfer_poles {
        *freq = *freq * factor();
        *damping = *damping * factor();
    }
    out.feedthrough_gain = out.feedthrough_gain * factor();
    out
}

/// Event drawn for one gate of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateEvent<T> {
    pub photons: u32,
    /// The channel's own avalanche.
    pub avalanche: bool,
    pub cause: Cause,
    /// Onset as a fraction of the gate period.
    pub onset: T,
    pub amplitude: T,
}

impl<T: Real> GateEvent<T> {
    fn quiet() -> Self {
        Self { photons: 0, avalanche: false, cause: Cause::None, onset: T::zero(), amplitude: T::zero() }
    }
}

/// First simulation pass: per-gate events for every channel plus the
/// precomputed per-channel waveform shapes needed to render frames.
#[derive(Debug, Clone)]
pub struct EventPlan<T> {
    pub devices: Vec<DeviceProfile<T>>,
    pub events: Vec<Vec<GateEvent<T>>>,
    feedthrough: Vec<Vec<T>>,
    shapes: Vec<ExpResponse<T>>,
    tail_frames: Vec<usize>,
    samples_per_gate: usize,
    noise_sigma_v: T,
    seed: u64,
}

impl<T: Real> EventPlan<T> {
    pub fn channels(&self) -> usize {
        self.devices.len()
    }

    pub fn n_gates(&self) -> usize {
        self.events.first().map_or(0, Vec::len)
    }

    pub fn feedthrough(&self, channel: usize) -> &[T] {
        &self.feedthrough[channel]
    }

    /// Ground truth for one channel. A frame carrying only the other channel's
    /// pulse is labelled `avalanche = true, cause = crosstalk`.
    pub fn ground_truth(&self, scenario: &Scenario<T>, channel: usize) -> GroundTruth {
        let other = (self.channels() == 2).then(|| 1 - channel);
        let chi = self.devices[channel].crosstalk_chi;
        let records = self.events[channel]
            .iter()
            .enumerate()
            .map(|(g, ev)| {
                let leaked = !ev.avalanche && chi > T::zero() && other.is_some_and(|o| self.events[o][g].avalanche);
                GateTruth {
                    gate_index: g as u64,
                    photon_present: ev.photons > 0 && scenario.illumination.is_lit(g as u64),
                    avalanche: ev.avalanche || leaked,
                    cause: if leaked { Cause::Crosstalk } else { ev.cause },
                }
            })
            .collect();
        GroundTruth { channel: channel as u8, records }
    }

    /// Adds the channel's own avalanche pulses (including tails of earlier gates) for `gate`.
    fn add_own_pulses(&self, channel: usize, gate: usize, out: &mut [T]) {
        let n = T::count(self.samples_per_gate);
        let events = &self.events[channel];
        let shape = &self.shapes[channel];
        let first = gate.saturating_sub(self.tail_frames[channel]);
        for (src, ev) in events.iter().enumerate().take(gate + 1).skip(first) {
            if ev.avalanche {
                let start = T::count(gate - src) * n - ev.onset * n;
                shape.accumulate_bins_scaled(start, ev.amplitude, out);
            }
        }
    }
}

fn resolve_devices<T: Real>(scenario: &Scenario<T>) -> Vec<DeviceProfile<T>> {
    let channels = scenario.channel_count();
    if channels == 2 && scenario.devices.len() == 1 {
        (0..2)
            .map(|c| {
                let seed = stream(scenario.seed, Purpose::DeviceSeed, c, 0).random::<u64>();
                apply_device_variation(&scenario.devices[0], seed)
            })
            .collect()
    } else {
        scenario.devices.clone()
    }
}

/// Independent per-gate draws that do not depend on history.
fn draw_memoryless<T: Real>(
    scenario: &Scenario<T>,
    device: &DeviceProfile<T>,
    channel: u32,
    gate: u64,
) -> Result<GateEvent<T>> {
    let seed = scenario.seed;
    let mut ev = GateEvent::quiet();
    if scenario.illumination.is_lit(gate) {
        ev.photons = match scenario.illumination.poisson_mu() {
            None => 1,
            Some(mu) if mu == T::zero() => 0,
            Some(mu) => {
                let law = Poisson::new(mu.as_f64()).map_err(|e| config_err(format!("illumination.mu: {e}")))?;
                let k: f64 = law.sample(&mut stream(seed, Purpose::PhotonNumber, channel, gate));
                k.min(u32::MAX as f64) as u32
            }
        };
    }
    let eta = device.efficiency_eta.as_f64();
    if ev.photons > 0 && eta > 0.0 {
        let p = 1.0 - (1.0 - eta).powi(ev.photons.min(i32::MAX as u32) as i32);
        if stream(seed, Purpose::PhotonClick, channel, gate).random::<f64>() < p {
            ev.avalanche = true;
            ev.cause = Cause::Photon;
        }
    }
    let dark = device.dark_prob_per_gate.as_f64();
    if dark > 0.0 && stream(seed, Purpose::Dark, channel, gate).random::<f64>() < dark && !ev.avalanche {
        ev.avalanche = true;
        ev.cause = Cause::Dark;
    }
    if ev.avalanche {
        draw_pulse(scenario, device, channel, gate, &mut ev)?;
    }
    Ok(ev)
}

fn draw_pulse<T: Real>(
    scenario: &Scenario<T>,
    device: &DeviceProfile<T>,
    channel: u32,
    gate: u64,
    ev: &mut GateEvent<T>,
) -> Result<()> {
    let law = Normal::new(device.avalanche_amp_mean_v.as_f64(), device.avalanche_amp_sigma_v.as_f64())
        .map_err(|e| config_err(format!("avalanche amplitude law: {e}")))?;
    let amp: f64 = law.sample(&mut stream(scenario.seed, Purpose::Amplitude, channel, gate));
    ev.amplitude = T::lit(amp.max(0.0));
    let (lo, hi) = (scenario.onset_window.0.as_f64(), scenario.onset_window.1.as_f64());
    let u: f64 = stream(scenario.seed, Purpose::Onset, channel, gate).random();
    ev.onset = T::lit(lo + (hi - lo) * u);
    Ok(())
}

/// Draws every channel's events. History-free draws run in parallel; the
/// afterpulse memory is resolved in a sequential scan per channel.
pub fn plan_events<T: Real>(scenario: &Scenario<T>) -> Result<EventPlan<T>> {
    scenario.validate()?;
    let devices = resolve_devices(scenario);
    for d in &devices {
        d.validate()?;
    }
    let n_gates = usize::try_from(scenario.n_gates).map_err(|_| config_err("scenario.n_gates too large"))?;
    let period_s = scenario.gate.period_s().as_f64();

    let mut events = Vec::with_capacity(devices.len());
    for (c, device) in devices.iter().enumerate() {
        let channel = c as u32;
        let mut evs = (0..n_gates)
            .into_par_iter()
            .map(|g| draw_memoryless(scenario, device, channel, g as u64))
            .collect::<Result<Vec<_>>>()?;

        let p_after = device.afterpulse_prob.as_f64();
        if p_after > 0.0 {
            let decay = (-period_s / device.afterpulse_tau_s.as_f64()).exp();
            let mut memory = 0.0f64;
            for (g, ev) in evs.iter_mut().enumerate() {
                if !ev.avalanche && memory > 0.0 {
                    let p = (p_after * memory).clamp(0.0, 1.0);
                    if stream(scenario.seed, Purpose::Afterpulse, channel, g as u64).random::<f64>() < p {
                        ev.avalanche = true;
                        ev.cause = Cause::Afterpulse;
                        draw_pulse(scenario, device, channel, g as u64, ev)?;
                    }
                }
                memory = (memory + if ev.avalanche { 1.0 } else { 0.0 }) * decay;
            }
        }
        events.push(evs);
    }

    let n = scenario.gate.samples_per_gate;
    let shapes: Vec<_> = devices.iter().map(|d| unit_avalanche_response(&scenario.gate, d)).collect();
    Ok(EventPlan {
        feedthrough: devices.iter().map(|d| gate_feedthrough_waveform(&scenario.gate, d)).collect(),
        tail_frames: shapes.iter().map(|s| tail_frames_for(s, n)).collect(),
        shapes,
        devices,
        events,
        samples_per_gate: n,
        noise_sigma_v: scenario.noise_sigma_v,
        seed: scenario.seed,
    })
}

/// Pre-quantization contributions to one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogComponents<T> {
    pub feedthrough: Vec<T>,
    pub own: Vec<T>,
    pub crosstalk: Vec<T>,
    pub noise: Vec<T>,
}

impl<T: Real> AnalogComponents<T> {
    pub fn total(&self) -> Vec<T> {
        let mut out = Vec::new();
        self.total_into(&mut out);
        out
    }

    fn total_into(&self, out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.feedthrough
                .iter()
                .zip(&self.own)
                .zip(&self.crosstalk)
                .zip(&self.noise)
                .map(|(((f, o), x), w)| *f + *o + *x + *w),
        );
    }
}

/// Renders one frame of one channel before quantization.
pub fn render_analog<T: Real>(plan: &EventPlan<T>, channel: usize, gate: usize) -> AnalogComponents<T> {
    let n = plan.samples_per_gate;
    let mut own = vec![T::zero(); n];
    plan.add_own_pulses(channel, gate, &mut own);

    let mut crosstalk = vec![T::zero(); n];
    let chi = plan.devices[channel].crosstalk_chi;
    if plan.channels() == 2 && chi > T::zero() {
        let mut leak = vec![T::zero(); n];
        plan.add_own_pulses(1 - channel, gate, &mut leak);
        for (x, l) in crosstalk.iter_mut().zip(&leak) {
            *x = chi * *l;
        }
    }

    let mut noise = vec![T::zero(); n];
    if plan.noise_sigma_v > T::zero() {
        let mut rng = stream(plan.seed, Purpose::Noise, channel as u32, gate as u64);
        for w in &mut noise {
            let z: f64 = rng.sample(StandardNormal);
            *w = plan.noise_sigma_v * T::lit(z);
        }
    }

    AnalogComponents { feedthrough: plan.feedthrough[channel].clone(), own, crosstalk, noise }
}

/// Round-to-nearest ADC conversion with clamping to the code range.
pub fn quantize<T: Real>(analog: &[T], adc: &AdcConfig<T>) -> Vec<u16> {
    let mut out = vec![0u16; analog.len()];
    quantize_into(analog, adc, &mut out);
    out
}

pub(crate) fn quantize_into<T: Real>(analog: &[T], adc: &AdcConfig<T>, out: &mut [u16]) {
    let max = adc.max_code();
    let steps = T::count(max as usize);
    for (code, v) in out.iter_mut().zip(analog) {
        let x = ((*v - adc.offset_v) / adc.full_scale_v * steps).round();
        *code = if x.is_nan() || x <= T::zero() {
            0
        } else if x >= steps {
            max
        } else {
            x.to_u16().unwrap_or(max)
        };
    }
}

/// Output of [`simulate_gate_train`].
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    pub devices: Vec<DeviceProfile<T>>,
    pub streams: Vec<FrameStream>,
    pub truth: Vec<GroundTruth>,
}

/// Synthesizes the quantized frame stream and ground truth of every channel.
///
/// Output is bit-identical for a fixed scenario regardless of the number of
/// worker threads.
pub fn simulate_gate_train<T: Real>(scenario: &Scenario<T>) -> Result<Simulation<T>> {
    let plan = plan_events(scenario)?;
    let n = scenario.gate.samples_per_gate;
    let mut streams = Vec::with_capacity(plan.channels());
    let mut truth = Vec::with_capacity(plan.channels());
    for c in 0..plan.channels() {
        let mut codes = vec![0u16; n * plan.n_gates()];
        codes.par_chunks_mut(n).enumerate().for_each_init(Vec::new, |buf, (g, frame)| {
            render_analog(&plan, c, g).total_into(buf);
            quantize_into(buf, &scenario.adc, frame);
        });
        streams.push(FrameStream { channel: c as u8, samples_per_gate: n, bits: scenario.adc.bits, codes });
        truth.push(plan.ground_truth(scenario, c));
    }
    Ok(Simulation { devices: plan.devices, streams, truth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigmodel::{GateConfig, Illumination};

    fn quiet_scenario() -> Scenario<f64> {
        let mut s = Scenario::default();
        s.devices[0].efficiency_eta = 0.0;
        s.devices[0].dark_prob_per_gate = 0.0;
        s.n_gates = 200;
        s
    }

    #[test]
    fn variation_identity_and_determinism() {
        let base = DeviceProfile { variation_fraction: 0.0, ..DeviceProfile::<f64>::default() };
        assert_eq!(apply_device_variation(&base, 17), base);
        let base = DeviceProfile::<f64>::default();
        assert_eq!(apply_device_variation(&base, 5), apply_device_variation(&base, 5));
        assert_ne!(apply_device_variation(&base, 5), apply_device_variation(&base, 6));
    }

    #[test]
    fn variation_moments() {
        let base = DeviceProfile { variation_fraction: 0.1, ..DeviceProfile::<f64>::default() };
        let mut us = Vec::new();
        for seed in 0..10_000u64 {
            let d = apply_device_variation(&base, seed);
            us.push(d.feedthrough_gain / base.feedthrough_gain - 1.0);
            us.push(d.transfer_poles[0].0 / base.transfer_poles[0].0 - 1.0);
            us.push(d.transfer_poles[0].1 / base.transfer_poles[0].1 - 1.0);
        }
        let max = us.iter().fold(0.0f64, |m, u| m.max(u.abs()));
        assert!(max <= 0.1 + 1e-12);
        // |u| is uniform on [0, 0.1]: mean 0.05, sd 0.1/sqrt(12).
        let n = us.len() as f64;
        let mean = us.iter().map(|u| u.abs()).sum::<f64>() / n;
        let sd_of_mean = 0.1 / 12f64.sqrt() / n.sqrt();
        assert!((mean - 0.05).abs() <= 3.0 * sd_of_mean, "mean |u| {mean}");
    }

    #[test]
    fn quantize_rules() {
        let adc = AdcConfig::<f64>::default();
        assert_eq!(quantize(&[adc.offset_v; 4], &adc), vec![0; 4]);
        assert_eq!(quantize(&[10.0, 0.2, f64::NAN, -5.0], &adc), vec![255, 255, 0, 0]);
    }

    #[test]
    fn no_events_means_only_feedthrough_and_noise() {
        let s = quiet_scenario();
        let sim = simulate_gate_train(&s).unwrap();
        assert!(sim.truth[0].records.iter().all(|r| !r.avalanche && r.cause == Cause::None));
    }

    #[test]
    fn noiseless_quiet_frames_repeat_exactly() {
        let mut s = quiet_scenario();
        s.noise_sigma_v = 0.0;
        let sim = simulate_gate_train(&s).unwrap();
        let first = sim.streams[0].frame(0).samples;
        assert!(sim.streams[0].frames().all(|f| f.samples == first));
    }

    #[test]
    fn always_clicks_with_unit_efficiency() {
        let mut s = quiet_scenario();
        s.devices[0].efficiency_eta = 1.0;
        s.illumination = Illumination::AllLit { mu: None };
        let sim = simulate_gate_train(&s).unwrap();
        assert!(sim.truth[0].records.iter().all(|r| r.avalanche && r.cause == Cause::Photon));
    }

    #[test]
    fn two_channels_from_one_base_differ() {
        let mut s = quiet_scenario();
        s.channels = Some(2);
        let plan = plan_events(&s).unwrap();
        assert_eq!(plan.channels(), 2);
        assert_ne!(plan.devices[0], plan.devices[1]);
    }

    #[test]
    fn crosstalk_scales_linearly() {
        let s = Scenario::<f64> {
            n_gates: 64,
            devices: vec![DeviceProfile { efficiency_eta: 0.5, crosstalk_chi: 0.05, ..DeviceProfile::default() }; 2],
            illumination: Illumination::AllLit { mu: None },
            ..Scenario::default()
        };
        let plan = plan_events(&s).unwrap();
        let mut doubled = s.clone();
        doubled.devices[1].crosstalk_chi = 0.1;
        let plan2 = plan_events(&doubled).unwrap();
        let mut seen = false;
        for g in 0..64 {
            let a = render_analog(&plan, 1, g).crosstalk;
            let b = render_analog(&plan2, 1, g).crosstalk;
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(2.0 * x, *y);
                seen |= *x != 0.0;
            }
        }
        assert!(seen);
    }

    #[test]
    fn gate_width_beyond_period_rejected() {
        let mut s = quiet_scenario();
        s.gate = GateConfig { gate_width_s: 1e-9, ..GateConfig::default() };
        assert!(simulate_gate_train(&s).is_err());
    }
}
