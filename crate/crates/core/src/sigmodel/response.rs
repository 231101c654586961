//! Closed-form linear response of the device/module band limit.
//!
//! The band limit is a cascade of second-order low-pass sections with unit DC
//! gain. Everything here works in sample-period time units, so poles are
//! dimensionless and of order one regardless of the gate frequency.
//!
//! A response is stored as a sum of complex exponentials `Σ r·exp(p·t)` for
//! `t ≥ 0`, which makes bin averages over sample intervals exact.

use num_complex::Complex;

use crate::scalar::Real;

/// Relative separation below which two poles are considered coincident.
const COINCIDENT_REL: f64 = 1e-7;
/// Relative nudge applied to a coincident pole.
const NUDGE_REL: f64 = 1e-5;

/// One exponential mode `residue · exp(pole · t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode<T> {
    pub pole: Complex<T>,
    pub residue: Complex<T>,
}

/// A causal response `y(t) = Σ residue·exp(pole·t)` for `t ≥ 0`, zero before.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpResponse<T> {
    modes: Vec<Mode<T>>,
}

/// Poles of the unit-DC-gain low-pass cascade, in units of 1/sample.
///
/// Each `(frequency_hz, damping)` pair contributes a second-order section.
/// Exactly repeated poles (critical damping, identical sections) are nudged
/// apart by a relative 1e-5 so the partial-fraction expansion stays simple.
pub fn lowpass_poles<T: Real>(transfer_poles: &[(T, T)], sample_period_s: T) -> Vec<Complex<T>> {
    let mut poles: Vec<Complex<T>> = Vec::with_capacity(2 * transfer_poles.len());
    for &(freq, damping) in transfer_poles {
        let w = T::TAU() * freq * sample_period_s;
        let pair = if damping < T::one() {
            let re = -damping * w;
            let im = w * (T::one() - damping * damping).sqrt();
            [Complex::new(re, im), Complex::new(re, -im)]
        } else {
            let root = (damping * damping - T::one()).sqrt();
            [Complex::new(-w * (damping - root), T::zero()), Complex::new(-w * (damping + root), T::zero())]
        };
        for p in pair {
            push_distinct(&mut poles, p);
        }
    }
    poles
}

fn push_distinct<T: Real>(poles: &mut Vec<Complex<T>>, mut p: Complex<T>) {
    let tol = T::lit(COINCIDENT_REL);
    let nudge = T::one() + T::lit(NUDGE_REL);
    while poles.iter().any(|q| (*q - p).norm() <= tol * q.norm().max(p.norm())) {
        p = p * nudge;
    }
    poles.push(p);
}

impl<T: Real> ExpResponse<T> {
    /// Response of `scale · Π(-p) / Π(s - p)` to an impulse, i.e. the unit-DC-gain
    /// low-pass impulse response scaled by `scale`.
    ///
    /// An empty pole list has no exponential representation (it is a pure
    /// impulse); callers handle that case themselves.
    pub fn lowpass_impulse(poles: &[Complex<T>], scale: T) -> Self {
        let gain = poles.iter().fold(Complex::new(scale, T::zero()), |acc, p| acc * (-*p));
        let modes = poles
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let denom = poles
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .fold(Complex::new(T::one(), T::zero()), |acc, (_, &pk)| acc * (pj - pk));
                Mode { pole: pj, residue: gain / denom }
            })
            .collect();
        Self { modes }
    }

    /// Low-pass response to `amplitude · exp(-t/decay)` starting at `t = 0`
    /// (`decay` in samples). With no poles this is the bare exponential.
    pub fn filtered_exponential(lowpass: &[Complex<T>], decay_samples: T, amplitude: T) -> Self {
        let mut poles = lowpass.to_vec();
        push_distinct(&mut poles, Complex::new(-decay_samples.recip(), T::zero()));
        let lp_gain = lowpass.iter().fold(Complex::new(amplitude, T::zero()), |acc, p| acc * (-*p));
        let modes = poles
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let denom = poles
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .fold(Complex::new(T::one(), T::zero()), |acc, (_, &pk)| acc * (pj - pk));
                Mode { pole: pj, residue: lp_gain / denom }
            })
            .collect();
        Self { modes }
    }

    pub fn modes(&self) -> &[Mode<T>] {
        &self.modes
    }

    /// Returns a copy with every residue multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { modes: self.modes.iter().map(|m| Mode { pole: m.pole, residue: m.residue * factor }).collect() }
    }

    /// Value at `t` (samples).
    pub fn value(&self, t: T) -> T {
        if t < T::zero() {
            return T::zero();
        }
        self.modes.iter().map(|m| (m.residue * (m.pole * t).exp()).re).fold(T::zero(), |a, b| a + b)
    }

    /// Slowest decay rate among the modes (1/samples).
    pub fn slowest_decay(&self) -> T {
        self.modes.iter().map(|m| -m.pole.re).fold(T::infinity(), T::min)
    }

    /// Integral over `[a, b]` (samples), honoring causality.
    pub fn integral(&self, a: T, b: T) -> T {
        let a = a.max(T::zero());
        if b <= a {
            return T::zero();
        }
        self.modes
            .iter()
            .map(|m| (m.residue * ((m.pole * b).exp() - (m.pole * a).exp()) / m.pole).re)
            .fold(T::zero(), |x, y| x + y)
    }

    /// Bin averages over `[start + n, start + n + 1)` for `n = 0..out.len()`, added into `out`.
    ///
    /// `start` is measured relative to the response origin and may be negative.
    pub fn accumulate_bins(&self, start: T, out: &mut [T]) {
        self.accumulate_bins_scaled(start, T::one(), out)
    }

    /// As [`accumulate_bins`](Self::accumulate_bins) with every bin multiplied by `scale`.
    pub fn accumulate_bins_scaled(&self, start: T, scale: T, out: &mut [T]) {
        let n = out.len();
        if n == 0 {
            return;
        }
        // Bins that end before the origin contribute nothing.
        let first = if start >= T::zero() {
            0
        } else {
            let k = (-start).floor().to_usize().unwrap_or(usize::MAX);
            if k >= n {
                return;
            }
            k
        };
        for m in &self.modes {
            let step = m.pole.exp();
            let coef = m.residue * scale / m.pole;
            let lo0 = start + T::count(first);
            // exp(p·max(lo, 0)) for the current bin's lower edge.
            let mut e_lo = (m.pole * lo0.max(T::zero())).exp();
            let mut e_hi = (m.pole * (lo0 + T::one())).exp();
            for (i, slot) in out.iter_mut().enumerate().skip(first) {
                if i > first {
                    e_lo = e_hi;
                    e_hi = e_hi * step;
                }
                *slot = *slot + (coef * (e_hi - e_lo)).re;
            }
        }
    }

    /// Integral over `[a, b] ⊂ [0, period]` of the periodic continuation
    /// `Σ_{m≥0} y(t + m·period)`.
    pub fn periodic_integral(&self, period: T, a: T, b: T) -> T {
        self.modes
            .iter()
            .map(|m| {
                let wrap = Complex::new(T::one(), T::zero()) - (m.pole * period).exp();
                (m.residue / wrap * ((m.pole * b).exp() - (m.pole * a).exp()) / m.pole).re
            })
            .fold(T::zero(), |x, y| x + y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowpass_has_unit_area() {
        let poles = lowpass_poles::<f64>(&[(3.0e9, 0.707)], 62.5e-12);
        let h = ExpResponse::lowpass_impulse(&poles, 1.0);
        let area = h.integral(0.0, 1e4);
        assert!((area - 1.0).abs() < 1e-12, "area {area}");
    }

    #[test]
    fn critical_damping_is_nudged_not_singular() {
        let poles = lowpass_poles::<f64>(&[(3.0e9, 1.0)], 62.5e-12);
        assert_eq!(poles.len(), 2);
        assert_ne!(poles[0], poles[1]);
        let h = ExpResponse::lowpass_impulse(&poles, 1.0);
        assert!((h.integral(0.0, 1e4) - 1.0).abs() < 1e-9);
        // Critically damped impulse response w²·t·exp(-w t) at t = 1/w.
        let w = std::f64::consts::TAU * 3.0e9 * 62.5e-12;
        let exact = w * (-1.0f64).exp();
        assert!((h.value(1.0 / w) - exact).abs() < 1e-4 * exact);
    }

    #[test]
    fn bare_exponential_without_band_limit() {
        let y = ExpResponse::<f64>::filtered_exponential(&[], 4.0, 2.0);
        assert!((y.value(4.0) - 2.0 * (-1.0f64).exp()).abs() < 1e-14);
        assert_eq!(y.value(-0.1), 0.0);
    }

    #[test]
    fn bins_match_direct_integrals() {
        let poles = lowpass_poles(&[(3.0e9, 0.6), (5.0e9, 0.9)], 62.5e-12);
        let y = ExpResponse::filtered_exponential(&poles, 5.0, 1.0);
        let mut bins = vec![0.0; 40];
        y.accumulate_bins(-3.3, &mut bins);
        for (n, b) in bins.iter().enumerate() {
            let lo = -3.3 + n as f64;
            let direct = y.integral(lo, lo + 1.0);
            assert!((b - direct).abs() < 1e-12, "bin {n}: {b} vs {direct}");
        }
        assert_eq!(bins[0], 0.0);
        assert_eq!(bins[2], 0.0);
        assert!(bins[3] > 0.0);
    }

    #[test]
    fn periodic_integral_sums_images() {
        let poles = lowpass_poles(&[(2.0e9, 0.5)], 62.5e-12);
        let h = ExpResponse::lowpass_impulse(&poles, 1.0);
        let period = 16.0;
        let images: f64 = (0..200).map(|m| h.integral(2.0 + m as f64 * period, 3.5 + m as f64 * period)).sum();
        assert!((h.periodic_integral(period, 2.0, 3.5) - images).abs() < 1e-12);
    }
}
