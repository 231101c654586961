//! Gain, QBER and the Shor–Preskill secret-key rate of a weak-coherent BB84
//! link with a two-detector receiver.
//!
//! Model: channel transmittance `t = eta_det · 10^(-loss/10)`, signal click
//! probability `p_sig = 1 - exp(-mu·t)`, gain `Q = 1 - (1 - p_sig)(1 - 2·p_dk)`.
//! Signal clicks err with probability `e_det`; clicks due to dark counts alone
//! err half the time, so `E = (e_det·p_sig + (Q - p_sig)/2) / Q`.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct KeyRateParams<T> {
    /// Mean photon number per pulse.
    pub mu: T,
    /// Total loss between source and detector, dB.
    pub channel_loss_db: T,
    pub eta_det: T,
    /// Dark-count probability per gate per detector.
    pub p_dk: T,
    /// Intrinsic misalignment error probability.
    pub e_det: T,
    pub sift_q: T,
    /// Error-correction inefficiency; 1 is the Shor–Preskill limit.
    pub f_ec: T,
}

impl<T: Real> Default for KeyRateParams<T> {
    fn default() -> Self {
        Self {
            mu: T::lit(0.1),
            channel_loss_db: T::lit(10.0),
            eta_det: T::lit(0.1),
            p_dk: T::lit(1e-5),
            e_det: T::lit(0.01),
            sift_q: T::lit(0.5),
            f_ec: T::one(),
        }
    }
}

fn unit<T: Real>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(config_err(format!("keyrate.{name} must lie in [0, 1], got {v}")))
    }
}

impl<T: Real> KeyRateParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= T::zero()) || !self.mu.is_finite() {
            return Err(config_err("keyrate.mu must be finite and >= 0"));
        }
        if !(self.channel_loss_db >= T::zero()) {
            return Err(config_err("keyrate.channel_loss_db must be >= 0"));
        }
        unit("eta_det", self.eta_det)?;
        unit("p_dk", self.p_dk)?;
        unit("e_det", self.e_det)?;
        unit("sift_q", self.sift_q)?;
        if !(self.f_ec >= T::one()) || !self.f_ec.is_finite() {
            return Err(config_err("keyrate.f_ec must be finite and >= 1"));
        }
        Ok(())
    }

    /// Detector-side transmittance including the detector efficiency.
    pub fn transmittance(&self) -> T {
        self.eta_det * T::lit(10.0).powf(-self.channel_loss_db / T::lit(10.0))
    }

    /// Signal (non-dark) click probability per pulse.
    pub fn signal_click_probability(&self) -> T {
        -(-self.mu * self.transmittance()).exp_m1()
    }
}

/// `H2(e) = -e·log2(e) - (1-e)·log2(1-e)`, zero at both ends.
pub fn binary_entropy<T: Real>(e: T) -> Result<T> {
    if !(e >= T::zero() && e <= T::one()) {
        return Err(Error::Domain(format!("binary entropy needs 0 <= e <= 1, got {e}")));
    }
    let term = |x: T| if x > T::zero() { -x * x.log2() } else { T::zero() };
    Ok(term(e) + term(T::one() - e))
}

/// Gain and QBER per pulse.
pub fn gain_and_qber<T: Real>(p: &KeyRateParams<T>) -> Result<(T, T)> {
    p.validate()?;
    let p_sig = p.signal_click_probability();
    let two = T::lit(2.0);
    // 1 - (1 - p_sig)(1 - 2·p_dk), rearranged to avoid cancellation.
    let q = (p_sig + two * p.p_dk * (T::one() - p_sig)).min(T::one());
    if q == T::zero() {
        return Err(Error::Domain("gain is zero; QBER undefined".into()));
    }
    let e = (p.e_det * p_sig + (q - p_sig).max(T::zero()) / two) / q;
    Ok((q, e.max(T::zero()).min(T::lit(0.5))))
}

/// `R = max(0, sift_q · Q · (1 - f_ec·H2(E) - H2(E)))` per pulse.
pub fn shor_preskill_rate<T: Real>(q: T, e: T, sift_q: T, f_ec: T) -> Result<T> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(Error::Domain(format!("gain must lie in [0, 1], got {q}")));
    }
    if !(sift_q >= T::zero() && sift_q <= T::one()) {
        return Err(Error::Domain(format!("sift_q must lie in [0, 1], got {sift_q}")));
    }
    if !(f_ec >= T::one()) {
        return Err(Error::Domain(format!("f_ec must be >= 1, got {f_ec}")));
    }
    let h = binary_entropy(e)?;
    Ok((sift_q * q * (T::one() - f_ec * h - h)).max(T::zero()))
}

/// Key rate per pulse for the full parameter set.
pub fn key_rate<T: Real>(p: &KeyRateParams<T>) -> Result<T> {
    let (q, e) = gain_and_qber(p)?;
    shor_preskill_rate(q, e, p.sift_q, p.f_ec)
}

/// `R(p_dk / reduction_factor) / R(p_dk)` with everything else fixed.
pub fn dark_count_gain<T: Real>(p: &KeyRateParams<T>, reduction_factor: T) -> Result<T> {
    if !(reduction_factor >= T::one()) {
        return Err(config_err("reduction_factor must be >= 1"));
    }
    let base = key_rate(p)?;
    if base <= T::zero() {
        return Err(Error::NoKey);
    }
    let improved = KeyRateParams { p_dk: p.p_dk / reduction_factor, ..p.clone() };
    Ok(key_rate(&improved)? / base)
}

/// Loss at which the dark-count gain first reaches `target`, located on the
/// `losses` grid and refined by bisection. `None` if the grid never crosses it.
pub fn loss_for_gain<T: Real>(
    base: &KeyRateParams<T>,
    reduction_factor: T,
    target: T,
    losses: &[T],
) -> Result<Option<T>> {
    let gain_at = |loss: T| -> Result<Option<T>> {
        match dark_count_gain(&KeyRateParams { channel_loss_db: loss, ..base.clone() }, reduction_factor) {
            Ok(g) => Ok(Some(g)),
            Err(Error::NoKey) => Ok(None),
            Err(e) => Err(e),
        }
    };
    // Past the baseline cutoff the gain is unbounded, so a grid point without
    // key counts as having reached the target.
    let mut prev: Option<T> = None;
    for &loss in losses {
        let g = gain_at(loss)?;
        if g.is_none_or(|g| g >= target) {
            return match prev {
                Some(l0) => bisect_gain(&gain_at, l0, loss, target).map(Some),
                None => Ok(g.map(|_| loss)),
            };
        }
        prev = Some(loss);
    }
    Ok(None)
}

fn bisect_gain<T: Real>(gain_at: &impl Fn(T) -> Result<Option<T>>, mut lo: T, mut hi: T, target: T) -> Result<T> {
    let two = T::lit(2.0);
    for _ in 0..200 {
        let mid = (lo + hi) / two;
        match gain_at(mid)? {
            Some(g) if g < target => lo = mid,
            _ => hi = mid,
        }
        if hi - lo <= T::epsilon() * hi.abs().max(T::one()) {
            break;
        }
    }
    Ok((lo + hi) / two)
}
