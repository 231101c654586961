//! Self-training charge-pulse compensator and threshold discriminator.
//!
//! The compensator keeps a ring of the most recent accepted gate frames and
//! uses their arithmetic mean as the charge-pulse template. Each incoming
//! frame is compared against the template built from strictly earlier frames,
//! the residual is discriminated against `v_th`, and only then is the frame
//! offered to the template.
//!
//! During warm-up every frame is accepted and decisions are withheld. When
//! warm-up ends the ring is purged of event-bearing frames (see
//! [`CompensatorState::finalize_warmup`]); afterwards a frame is accepted only
//! if its largest absolute residual stays within `guard_multiplier` noise
//! sigmas, so avalanches never leak into the template. The `holdoff_gates`
//! frames after a rejected one are skipped as well, since they may carry the
//! decaying tail of the rejected pulse.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::scalar::{mad_sigma_in_place, Real};
use crate::sigmodel::{AdcConfig, FrameStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct CompensatorConfig<T> {
    /// Number of past accepted cycles averaged into the template.
    pub window_n: usize,
    /// Frames during which decisions are withheld; defaults to `window_n`.
    pub warmup_gates: Option<usize>,
    pub guard_multiplier: T,
    /// Frames excluded from the template after each guard rejection.
    pub holdoff_gates: usize,
    /// `(start, end)` fractions of the gate period searched for the peak.
    pub timing_window: (T, T),
    /// Discrimination level, volts.
    pub v_th: T,
}

impl<T: Real> Default for CompensatorConfig<T> {
    fn default() -> Self {
        Self {
            window_n: 64,
            warmup_gates: None,
            guard_multiplier: T::lit(6.0),
            holdoff_gates: 1,
            timing_window: (T::lit(0.2), T::lit(0.9)),
            v_th: T::lit(0.02),
        }
    }
}

impl<T: Real> CompensatorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.window_n == 0 {
            return Err(config_err("compensator.window_n must be >= 1"));
        }
        if self.warmup_gates == Some(0) {
            return Err(config_err("compensator.warmup_gates must be >= 1"));
        }
        let (start, end) = self.timing_window;
        if !(start >= T::zero() && start < end && end <= T::one()) {
            return Err(config_err("compensator.timing_window must satisfy 0 <= start < end <= 1"));
        }
        if !(self.v_th >= T::zero()) || !self.v_th.is_finite() {
            return Err(config_err("compensator.v_th must be finite and >= 0"));
        }
        if !(self.guard_multiplier > T::zero()) {
            return Err(config_err("compensator.guard_multiplier must be > 0"));
        }
        Ok(())
    }

    pub fn warmup(&self) -> usize {
        self.warmup_gates.unwrap_or(self.window_n)
    }

    /// Sample index range `[lo, hi)` whose start times fall inside the timing window.
    pub fn window_indices(&self, samples_per_gate: usize) -> (usize, usize) {
        let n = T::count(samples_per_gate);
        let lo = (self.timing_window.0 * n).ceil().to_usize().unwrap_or(0);
        let hi = (self.timing_window.1 * n).ceil().to_usize().unwrap_or(samples_per_gate);
        (lo.min(samples_per_gate), hi.min(samples_per_gate))
    }
}

/// Detector output for one gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision<T> {
    pub gate_index: u64,
    pub channel: u8,
    pub click: bool,
    pub peak_v: T,
    pub peak_sample: usize,
    /// Reported during warm-up; excluded from statistics.
    pub withheld: bool,
}

/// Result of offering a frame to the template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Update {
    Accepted,
    /// Excluded by the guard test; only bookkeeping changed.
    Rejected,
}

/// Running state of one channel's compensator.
#[derive(Debug, Clone)]
pub struct CompensatorState<T> {
    config: CompensatorConfig<T>,
    adc: AdcConfig<T>,
    samples_per_gate: usize,
    template: Vec<T>,
    /// Ring of accepted frames as ADC codes, `window_n` slots.
    ring: Vec<u16>,
    ring_head: usize,
    ring_len: usize,
    /// Per-sample sums of the codes in the ring; exact.
    sums: Vec<u64>,
    accepted_count: u64,
    rejected_count: u64,
    frames_seen: u64,
    noise_sigma_est: T,
    holdoff_left: usize,
    residual: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> CompensatorState<T> {
    /// Zero template, empty ring.
    pub fn new(config: CompensatorConfig<T>, adc: AdcConfig<T>, samples_per_gate: usize) -> Result<Self> {
        config.validate()?;
        adc.validate()?;
        let (lo, hi) = config.window_indices(samples_per_gate);
        if lo >= hi {
            return Err(config_err("compensator.timing_window contains no sample"));
        }
        let n = samples_per_gate;
        Ok(Self {
            ring: vec![0; config.window_n * n],
            config,
            adc,
            samples_per_gate: n,
            template: vec![T::zero(); n],
            ring_head: 0,
            ring_len: 0,
            sums: vec![0; n],
            accepted_count: 0,
            rejected_count: 0,
            frames_seen: 0,
            noise_sigma_est: T::zero(),
            holdoff_left: 0,
            residual: vec![T::zero(); n],
            scratch: Vec::with_capacity(n),
        })
    }

    pub fn config(&self) -> &CompensatorConfig<T> {
        &self.config
    }

    pub fn template(&self) -> &[T] {
        &self.template
    }

    pub fn accepted_count(&self) -> u64 {
        self.accepted_count
    }

    pub fn rejected_count(&self) -> u64 {
        self.rejected_count
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    pub fn noise_sigma_est(&self) -> T {
        self.noise_sigma_est
    }

    pub fn ring_capacity(&self) -> usize {
        self.config.window_n
    }

    pub fn ring_len(&self) -> usize {
        self.ring_len
    }

    pub fn in_warmup(&self) -> bool {
        self.frames_seen < self.config.warmup() as u64
    }

    /// The accepted frames currently averaged, oldest first, de-quantized.
    pub fn ring_frames(&self) -> Vec<Vec<T>> {
        (0..self.ring_len).map(|i| self.ring_slot(i).iter().map(|c| self.adc.dequantize(*c)).collect()).collect()
    }

    /// Changes the discrimination level; the template is unaffected.
    pub fn set_v_th(&mut self, v_th: T) {
        self.config.v_th = v_th;
    }

    fn ring_slot(&self, i: usize) -> &[u16] {
        let n = self.samples_per_gate;
        let slot = (self.ring_head + i) % self.config.window_n;
        &self.ring[slot * n..(slot + 1) * n]
    }

    /// Quantization-noise floor for the noise estimate.
    fn sigma_floor(&self) -> T {
        self.adc.lsb() / T::lit(12f64.sqrt())
    }

    fn check_len(&self, frame: &[u16]) -> Result<()> {
        if frame.len() != self.samples_per_gate {
            return Err(Error::LengthMismatch { expected: self.samples_per_gate, got: frame.len() });
        }
        Ok(())
    }

    /// De-quantized frame minus template.
    pub fn compensate(&self, frame: &[u16]) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.samples_per_gate];
        self.compensate_into(frame, &mut out)?;
        Ok(out)
    }

    pub fn compensate_into(&self, frame: &[u16], out: &mut [T]) -> Result<()> {
        self.check_len(frame)?;
        if out.len() != frame.len() {
            return Err(Error::LengthMismatch { expected: frame.len(), got: out.len() });
        }
        let (offset, lsb) = (self.adc.offset_v, self.adc.lsb());
        for ((r, c), t) in out.iter_mut().zip(frame).zip(&self.template) {
            *r = offset + lsb * T::count(*c as usize) - *t;
        }
        Ok(())
    }

    /// Offers a frame to the template.
    pub fn update_template(&mut self, frame: &[u16]) -> Result<Update> {
        self.check_len(frame)?;
        let mut residual = std::mem::take(&mut self.residual);
        self.compensate_into(frame, &mut residual)?;
        let outcome = self.update_with_residual(frame, &residual);
        self.residual = residual;
        Ok(outcome)
    }

    fn update_with_residual(&mut self, frame: &[u16], residual: &[T]) -> Update {
        self.frames_seen += 1;
        if self.frames_seen <= self.config.warmup() as u64 {
            self.push(frame);
            self.accepted_count += 1;
            if self.frames_seen == self.config.warmup() as u64 {
                self.finalize_warmup();
            }
            return Update::Accepted;
        }

        let worst = residual.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        let guard = self.config.guard_multiplier * self.noise_sigma_est.max(self.sigma_floor());
        if worst > guard {
            self.rejected_count += 1;
            self.holdoff_left = self.config.holdoff_gates;
            return Update::Rejected;
        }
        if self.holdoff_left > 0 {
            self.holdoff_left -= 1;
            self.rejected_count += 1;
            return Update::Rejected;
        }

        self.scratch.clear();
        self.scratch.extend_from_slice(residual);
        let frame_sigma = mad_sigma_in_place(&mut self.scratch);
        let weight = T::count(self.config.window_n).recip();
        self.noise_sigma_est = self.noise_sigma_est + (frame_sigma - self.noise_sigma_est) * weight;

        self.push(frame);
        self.accepted_count += 1;
        Update::Accepted
    }

    fn push(&mut self, frame: &[u16]) {
        let n = self.samples_per_gate;
        let cap = self.config.window_n;
        let slot = if self.ring_len < cap {
            self.ring_len += 1;
            (self.ring_head + self.ring_len - 1) % cap
        } else {
            let oldest = self.ring_head;
            for (s, c) in self.sums.iter_mut().zip(&self.ring[oldest * n..(oldest + 1) * n]) {
                *s -= *c as u64;
            }
            self.ring_head = (self.ring_head + 1) % cap;
            oldest
        };
        self.ring[slot * n..(slot + 1) * n].copy_from_slice(frame);
        for (s, c) in self.sums.iter_mut().zip(frame) {
            *s += *c as u64;
        }
        self.refresh_template();
    }

    fn refresh_template(&mut self) {
        let count = self.ring_len as f64;
        let (offset, lsb) = (self.adc.offset_v, self.adc.lsb());
        for (t, s) in self.template.iter_mut().zip(&self.sums) {
            *t = offset + lsb * T::lit(*s as f64 / count);
        }
    }

    /// Purges event-bearing frames collected during warm-up.
    ///
    /// Warm-up accepts everything, so the ring may hold avalanches. Clean
    /// frames (feedthrough plus noise) form the densest cluster under the
    /// max-abs distance, so the frame with the closest quarter of neighbours
    /// seeds a reference; the noise sigma comes from the MAD of those
    /// neighbours' deviations, and only frames within the guard band of the
    /// refined mean are kept.
    pub fn finalize_warmup(&mut self) {
        let n = self.samples_per_gate;
        let m = self.ring_len;
        let floor = self.sigma_floor();
        if m < 3 {
            self.noise_sigma_est = floor;
            return;
        }
        let frames: Vec<Vec<u16>> = (0..m).map(|i| self.ring_slot(i).to_vec()).collect();
        let lsb = self.adc.lsb();
        let guard = self.config.guard_multiplier;

        let dist = |a: &[u16], b: &[u16]| -> u32 {
            a.iter().zip(b).map(|(x, y)| (*x as i32 - *y as i32).unsigned_abs()).max().unwrap_or(0)
        };
        let mut table = vec![0u32; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let d = dist(&frames[i], &frames[j]);
                table[i * m + j] = d;
                table[j * m + i] = d;
            }
        }
        let k = ((m - 1) / 4).max(1);
        let neighbours = |i: usize| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..m).filter(|&j| j != i).collect();
            idx.sort_by_key(|&j| (table[i * m + j], j));
            idx.truncate(k);
            idx
        };
        let seed = (0..m)
            .min_by_key(|&i| {
                let nb = neighbours(i);
                (table[i * m + nb[k - 1]], i)
            })
            .unwrap_or(0);

        let mut devs: Vec<T> = Vec::with_capacity(k * n);
        for j in neighbours(seed) {
            for (a, b) in frames[j].iter().zip(&frames[seed]) {
                devs.push(lsb * T::lit(*a as f64 - *b as f64));
            }
        }
        let sqrt2 = T::lit(2f64.sqrt());
        let mut sigma = (mad_sigma_in_place(&mut devs) / sqrt2).max(floor);

        let first: Vec<usize> =
            (0..m).filter(|&j| lsb * T::lit(table[seed * m + j] as f64) <= guard * sigma * sqrt2).collect();
        let mean = |members: &[usize]| -> Vec<T> {
            let c = members.len() as f64;
            (0..n)
                .map(|s| {
                    let total: u64 = members.iter().map(|&j| frames[j][s] as u64).sum();
                    self.adc.offset_v + lsb * T::lit(total as f64 / c)
                })
                .collect()
        };
        let reference = mean(&first);
        if first.len() > 1 {
            let mut res: Vec<T> = Vec::with_capacity(first.len() * n);
            for &j in &first {
                for (c, t) in frames[j].iter().zip(&reference) {
                    res.push(self.adc.dequantize(*c) - *t);
                }
            }
            let c = T::count(first.len());
            let refined = mad_sigma_in_place(&mut res) * (c / (c - T::one())).sqrt();
            sigma = refined.max(floor);
        }
        let band = guard * sigma * (T::one() + T::count(first.len()).recip()).sqrt();
        let in_band: Vec<bool> = frames
            .iter()
            .map(|f| f.iter().zip(&reference).all(|(c, t)| (self.adc.dequantize(*c) - *t).abs() <= band))
            .collect();
        // Ring order is arrival order during warm-up, so holdoff applies here too.
        let holdoff = self.config.holdoff_gates;
        let mut keep: Vec<usize> =
            (0..m).filter(|&j| in_band[j] && in_band[j.saturating_sub(holdoff)..j].iter().all(|b| *b)).collect();
        self.holdoff_left = in_band.iter().rev().take(holdoff).position(|b| !b).map_or(0, |i| holdoff - i);
        if keep.is_empty() {
            keep = first;
        }

        self.ring_head = 0;
        self.ring_len = 0;
        self.sums.iter_mut().for_each(|s| *s = 0);
        for &j in &keep {
            let slot = self.ring_len;
            self.ring[slot * n..(slot + 1) * n].copy_from_slice(&frames[j]);
            for (s, c) in self.sums.iter_mut().zip(&frames[j]) {
                *s += *c as u64;
            }
            self.ring_len += 1;
        }
        self.refresh_template();
        self.noise_sigma_est = sigma;
    }

    /// Compensate, discriminate and update for one frame, in that order.
    pub fn step(&mut self, gate_index: u64, channel: u8, frame: &[u16]) -> Result<Decision<T>> {
        self.check_len(frame)?;
        let withheld = self.in_warmup();
        let mut residual = std::mem::take(&mut self.residual);
        self.compensate_into(frame, &mut residual)?;
        let mut decision = discriminate(&residual, &self.config, gate_index, channel);
        decision.withheld = withheld;
        self.update_with_residual(frame, &residual);
        self.residual = residual;
        Ok(decision)
    }
}

/// Peak search inside the timing window; a click needs `peak_v > v_th`.
pub fn discriminate<T: Real>(
    residual: &[T],
    config: &CompensatorConfig<T>,
    gate_index: u64,
    channel: u8,
) -> Decision<T> {
    let (lo, hi) = config.window_indices(residual.len());
    let mut peak_v = T::neg_infinity();
    let mut peak_sample = lo;
    for (i, v) in residual.iter().enumerate().take(hi).skip(lo) {
        if *v > peak_v {
            peak_v = *v;
            peak_sample = i;
        }
    }
    Decision { gate_index, channel, click: peak_v > config.v_th, peak_v, peak_sample, withheld: false }
}

/// Runs one channel's frames through a fresh compensator.
pub fn process_stream<T: Real>(
    frames: &FrameStream,
    config: &CompensatorConfig<T>,
    adc: &AdcConfig<T>,
) -> Result<(Vec<Decision<T>>, CompensatorState<T>)> {
    let mut state = CompensatorState::new(config.clone(), adc.clone(), frames.samples_per_gate)?;
    let mut decisions = Vec::with_capacity(frames.n_gates());
    for f in frames.frames() {
        decisions.push(state.step(f.gate_index, f.channel, f.samples)?);
    }
    Ok((decisions, state))
}

/// Writes decisions as `gate_index,channel,click,peak_v,peak_sample,withheld`.
pub fn write_decisions<W: std::io::Write, T: Real>(mut w: W, decisions: &[Decision<T>]) -> Result<()> {
    writeln!(w, "gate_index,channel,click,peak_v,peak_sample,withheld")?;
    for d in decisions {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            d.gate_index,
            d.channel,
            u8::from(d.click),
            d.peak_v,
            d.peak_sample,
            u8::from(d.withheld)
        )?;
    }
    Ok(())
}
