//! Analytic design checks for the cooled APD module: gate-line bandwidth set
//! by the bond-wire inductance, and conducted heat load of the wiring.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::scalar::Real;

/// Upper bound on the wire length searched by [`min_length_for_bandwidth`], mm.
pub const MAX_SEARCH_LENGTH_MM: f64 = 1.0e6;

/// Linear two-port in ABCD (chain) form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPort<T> {
    pub a: Complex<T>,
    pub b: Complex<T>,
    pub c: Complex<T>,
    pub d: Complex<T>,
}

impl<T: Real> TwoPort<T> {
    pub fn identity() -> Self {
        let (one, zero) = (Complex::new(T::one(), T::zero()), Complex::new(T::zero(), T::zero()));
        Self { a: one, b: zero, c: zero, d: one }
    }

    pub fn series_impedance(z: Complex<T>) -> Self {
        Self { b: z, ..Self::identity() }
    }

    pub fn shunt_admittance(y: Complex<T>) -> Self {
        Self { c: y, ..Self::identity() }
    }

    /// `self` followed by `next`.
    pub fn cascade(&self, next: &Self) -> Self {
        Self {
            a: self.a * next.a + self.b * next.c,
            b: self.a * next.b + self.b * next.d,
            c: self.c * next.a + self.d * next.c,
            d: self.c * next.b + self.d * next.d,
        }
    }

    /// Forward transmission between equal real reference impedances `z0`.
    pub fn s21(&self, z0: T) -> Complex<T> {
        let z0c = Complex::new(z0, T::zero());
        Complex::new(T::lit(2.0), T::zero()) / (self.a + self.b / z0c + self.c * z0c + self.d)
    }
}

/// Gate transmission line through the bond wires: source `z0`, series wire
/// inductance, shunt pad capacitance, load `z0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct RfLinkSpec<T> {
    pub z0_ohm: T,
    /// Henries per millimetre of bond wire.
    pub wire_inductance_per_mm: T,
    /// Total bond-wire length, mm.
    pub wire_length_mm: T,
    pub shunt_c_f: T,
    pub f_max_hz: T,
    pub n_points: usize,
}

impl<T: Real> Default for RfLinkSpec<T> {
    fn default() -> Self {
        Self {
            z0_ohm: T::lit(50.0),
            wire_inductance_per_mm: T::lit(1.0e-9),
            wire_length_mm: T::lit(5.0),
            shunt_c_f: T::zero(),
            f_max_hz: T::lit(20.0e9),
            n_points: 2001,
        }
    }
}

impl<T: Real> RfLinkSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.z0_ohm > T::zero()) {
            return Err(config_err("rf.z0_ohm must be > 0"));
        }
        if !(self.wire_length_mm >= T::zero()) || !(self.wire_inductance_per_mm >= T::zero()) {
            return Err(config_err("rf wire length and inductance must be >= 0"));
        }
        if !(self.shunt_c_f >= T::zero()) {
            return Err(config_err("rf.shunt_c_f must be >= 0"));
        }
        if !(self.f_max_hz > T::zero()) || !self.f_max_hz.is_finite() {
            return Err(config_err("rf.f_max_hz must be > 0"));
        }
        if self.n_points < 2 {
            return Err(config_err("rf.n_points must be >= 2"));
        }
        Ok(())
    }

    pub fn inductance_h(&self) -> T {
        self.wire_inductance_per_mm * self.wire_length_mm
    }

    pub fn network(&self, freq_hz: T) -> TwoPort<T> {
        let w = T::TAU() * freq_hz;
        let series = TwoPort::series_impedance(Complex::new(T::zero(), w * self.inductance_h()));
        let shunt = TwoPort::shunt_admittance(Complex::new(T::zero(), w * self.shunt_c_f));
        series.cascade(&shunt)
    }

    pub fn s21(&self, freq_hz: T) -> Complex<T> {
        self.network(freq_hz).s21(self.z0_ohm)
    }
}

/// −3 dB (half-power) frequency, or the evaluation ceiling when `at_ceiling`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth<T> {
    pub hz: T,
    pub at_ceiling: bool,
}

/// First frequency where `|S21|²` falls to half its DC value.
pub fn rf_bandwidth<T: Real>(spec: &RfLinkSpec<T>) -> Result<Bandwidth<T>> {
    spec.validate()?;
    let half_power = spec.s21(T::zero()).norm_sqr() / T::lit(2.0);
    let below = |f: T| spec.s21(f).norm_sqr() <= half_power;
    let step = spec.f_max_hz / T::count(spec.n_points - 1);
    let mut prev = T::zero();
    for k in 1..spec.n_points {
        let f = if k == spec.n_points - 1 { spec.f_max_hz } else { step * T::count(k) };
        if below(f) {
            let (mut lo, mut hi) = (prev, f);
            for _ in 0..200 {
                let mid = (lo + hi) / T::lit(2.0);
                if below(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= T::epsilon() * hi {
                    break;
                }
            }
            return Ok(Bandwidth { hz: (lo + hi) / T::lit(2.0), at_ceiling: false });
        }
        prev = f;
    }
    Ok(Bandwidth { hz: spec.f_max_hz, at_ceiling: true })
}

/// Longest total wire length that still reaches `target_hz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthLimit<T> {
    pub length_mm: T,
    /// The search hit [`MAX_SEARCH_LENGTH_MM`] without the bandwidth dropping to the target.
    pub saturated: bool,
}

pub fn min_length_for_bandwidth<T: Real>(template: &RfLinkSpec<T>, target_hz: T) -> Result<LengthLimit<T>> {
    template.validate()?;
    if !(target_hz > T::zero() && target_hz < template.f_max_hz) {
        return Err(config_err("target bandwidth must lie in (0, f_max_hz)"));
    }
    let bw = |len: T| rf_bandwidth(&RfLinkSpec { wire_length_mm: len, ..template.clone() }).map(|b| b.hz);
    if bw(T::zero())? < target_hz {
        return Err(Error::Domain("target bandwidth unattainable even with zero wire length".into()));
    }
    let cap = T::lit(MAX_SEARCH_LENGTH_MM);
    let mut lo = T::zero();
    let mut hi = T::one();
    while bw(hi)? >= target_hz {
        lo = hi;
        hi = hi * T::lit(2.0);
        if hi > cap {
            return Ok(LengthLimit { length_mm: cap, saturated: true });
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if bw(mid)? >= target_hz {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::lit(1e-12) * hi {
            break;
        }
    }
    Ok(LengthLimit { length_mm: (lo + hi) / T::lit(2.0), saturated: false })
}

/// A group of identical conductors between the warm side and the cold stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct WireSpec<T> {
    pub count: u32,
    /// Thermal conductivity, W/(m·K).
    pub conductivity_k: T,
    pub cross_section_m2: T,
    pub length_m: T,
    #[serde(default)]
    pub material: String,
}

impl<T: Real> WireSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0
            || !(self.conductivity_k > T::zero())
            || !(self.cross_section_m2 > T::zero())
            || !(self.length_m > T::zero())
        {
            return Err(config_err(format!("wire '{}' needs positive count, k, area and length", self.material)));
        }
        Ok(())
    }
}

/// Calibrated default harness: two gold RF ribbons (in and out gate lines)
/// and eight 25 µm gold DC bond wires. Dimensions are a calibration choice.
pub fn default_harness<T: Real>() -> Vec<WireSpec<T>> {
    let gold = T::lit(315.0);
    let wire_radius = 12.5e-6;
    vec![
        WireSpec {
            count: 2,
            conductivity_k: gold,
            cross_section_m2: T::lit(0.25e-3 * 25e-6),
            length_m: T::lit(3.0e-3),
            material: "gold RF ribbon 250x25um".into(),
        },
        WireSpec {
            count: 8,
            conductivity_k: gold,
            cross_section_m2: T::lit(std::f64::consts::PI * wire_radius * wire_radius),
            length_m: T::lit(2.0e-3),
            material: "gold DC wire 25um".into(),
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFlux<T> {
    pub total_mw: T,
    /// `(material label, mW)` per wire group, in input order.
    pub per_wire_mw: Vec<(String, T)>,
}

/// Steady one-dimensional Fourier conduction, `q = count·k·A·ΔT/L`.
pub fn thermal_flux<T: Real>(wires: &[WireSpec<T>], delta_t_k: T) -> Result<ThermalFlux<T>> {
    if !(delta_t_k >= T::zero()) {
        return Err(config_err("delta_t_k must be >= 0"));
    }
    let mut per_wire_mw = Vec::with_capacity(wires.len());
    for w in wires {
        w.validate()?;
        let watts = T::count(w.count as usize) * w.conductivity_k * w.cross_section_m2 * delta_t_k / w.length_m;
        per_wire_mw.push((w.material.clone(), watts * T::lit(1000.0)));
    }
    let total_mw = per_wire_mw.iter().map(|(_, q)| *q).fold(T::zero(), |a, b| a + b);
    Ok(ThermalFlux { total_mw, per_wire_mw })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetCheck<T> {
    pub pass: bool,
    /// Budget minus load; negative when over budget.
    pub margin_mw: T,
}

/// Passes when the load does not exceed the budget (inclusive).
pub fn budget_check<T: Real>(flux_mw: T, budget_mw: T) -> BudgetCheck<T> {
    BudgetCheck { pass: flux_mw <= budget_mw, margin_mw: budget_mw - flux_mw }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(len: f64) -> RfLinkSpec<f64> {
        RfLinkSpec { wire_length_mm: len, ..RfLinkSpec::default() }
    }

    #[test]
    fn zero_length_is_flat() {
        let bw = rf_bandwidth(&spec(0.0)).unwrap();
        assert!(bw.at_ceiling);
        assert_eq!(bw.hz, 20e9);
    }

    #[test]
    fn series_inductor_closed_form() {
        let bw = rf_bandwidth(&spec(5.0)).unwrap();
        let closed = 2.0 * 50.0 / (std::f64::consts::TAU * 5e-9);
        assert!(!bw.at_ceiling);
        assert!((bw.hz - closed).abs() <= 0.005 * closed, "{} vs {closed}", bw.hz);
        assert!((bw.hz - 3.183e9).abs() <= 0.005 * 3.183e9);
    }

    #[test]
    fn bandwidth_falls_with_length() {
        let bws: Vec<f64> = (1..=10).map(|l| rf_bandwidth(&spec(l as f64)).unwrap().hz).collect();
        assert!(bws.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn shunt_capacitance_lowers_bandwidth() {
        let with_c = RfLinkSpec { shunt_c_f: 5e-12, ..spec(5.0) };
        assert!(rf_bandwidth(&with_c).unwrap().hz < rf_bandwidth(&spec(5.0)).unwrap().hz);
    }

    #[test]
    fn length_for_three_gigahertz() {
        let lim = min_length_for_bandwidth(&RfLinkSpec::<f64>::default(), 3.0e9).unwrap();
        assert!(!lim.saturated);
        assert!((lim.length_mm - 5.3).abs() <= 0.02 * 5.3, "{}", lim.length_mm);
        assert!(lim.length_mm >= 5.0);
    }

    #[test]
    fn length_round_trip() {
        let bw = rf_bandwidth(&spec(7.25)).unwrap().hz;
        let lim = min_length_for_bandwidth(&spec(1.0), bw).unwrap();
        assert!((lim.length_mm - 7.25).abs() < 1e-6);
    }

    #[test]
    fn degenerate_targets() {
        let lim = min_length_for_bandwidth(&RfLinkSpec::<f64>::default(), 1.0).unwrap();
        assert!(lim.saturated);
        assert_eq!(lim.length_mm, MAX_SEARCH_LENGTH_MM);
        assert!(min_length_for_bandwidth(&RfLinkSpec::<f64>::default(), 25e9).is_err());
        // A large pad capacitance caps the bandwidth even with no wire.
        let heavy = RfLinkSpec { shunt_c_f: 1e-9, ..RfLinkSpec::<f64>::default() };
        assert!(matches!(min_length_for_bandwidth(&heavy, 3e9), Err(Error::Domain(_))));
    }

    #[test]
    fn thermal_basics() {
        assert_eq!(thermal_flux::<f64>(&[], 100.0).unwrap().total_mw, 0.0);
        let w = default_harness::<f64>();
        let base = thermal_flux(&w, 100.0).unwrap().total_mw;
        assert!((150.0..=250.0).contains(&base), "{base}");
        let bad = WireSpec { count: 0, ..w[0].clone() };
        assert!(thermal_flux(&[bad], 100.0).is_err());
        assert!(thermal_flux(&w, -1.0).is_err());
    }

    #[test]
    fn budget_rules() {
        assert_eq!(budget_check(200.0, 250.0), BudgetCheck { pass: true, margin_mw: 50.0 });
        assert_eq!(budget_check(250.0, 250.0), BudgetCheck { pass: true, margin_mw: 0.0 });
        assert_eq!(budget_check(300.0, 250.0), BudgetCheck { pass: false, margin_mw: -50.0 });
    }
}
