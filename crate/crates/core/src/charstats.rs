//! Detection-efficiency and dark-count estimation, threshold sweeps and
//! matched-efficiency comparison of two detectors.

use rayon::prelude::*;

use crate::compensator::{process_stream, CompensatorConfig, Decision};
use crate::error::{config_err, Error, Result};
use crate::scalar::Real;
use crate::sigmodel::{simulate_gate_train, AdcConfig, FrameStream, Illumination, Scenario};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

pub const SWEEP_CSV_HEADER: &str =
    "v_th,gates_lit,clicks_lit,gates_dark,clicks_dark,p_pd,p_pd_ci_lo,p_pd_ci_hi,p_dk,p_dk_ci_lo,p_dk_ci_hi";

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval<T: Real>(successes: u64, trials: u64, z: T) -> (T, T) {
    if trials == 0 {
        return (T::zero(), T::one());
    }
    let n = T::lit(trials as f64);
    let p = T::lit(successes as f64) / n;
    let z2 = z * z;
    let two = T::lit(2.0);
    let denom = T::one() + z2 / n;
    let centre = (p + z2 / (two * n)) / denom;
    let half = z / denom * (p * (T::one() - p) / n + z2 / (two * two * n * n)).sqrt();
    let lo = (centre - half).max(T::zero()).min(p);
    let hi = (centre + half).min(T::one()).max(p);
    (lo, hi)
}

/// One threshold's worth of counts and estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub v_th: T,
    pub gates_lit: u64,
    pub clicks_lit: u64,
    pub gates_dark: u64,
    pub clicks_dark: u64,
    pub p_pd: T,
    pub p_pd_ci: (T, T),
    pub p_dk: T,
    pub p_dk_ci: (T, T),
    /// Poisson-corrected efficiency, present when the source mean is known.
    pub efficiency_est: Option<T>,
    /// Checksum of the frame stream the row was computed from.
    pub stream_checksum: u64,
}

/// Rows in increasing threshold order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult<T> {
    pub rows: Vec<SweepRow<T>>,
}

/// Click statistics of one decision stream against the illumination pattern.
///
/// Withheld decisions are skipped. `p_pd` is the raw lit-gate click
/// probability; with `poisson_mu` the efficiency is also corrected for the
/// Poisson photon number and the dark background.
pub fn count_statistics<T: Real>(
    decisions: &[Decision<T>],
    illumination: &Illumination<T>,
    poisson_mu: Option<T>,
    v_th: T,
) -> Result<SweepRow<T>> {
    let (mut gates_lit, mut clicks_lit, mut gates_dark, mut clicks_dark) = (0u64, 0u64, 0u64, 0u64);
    for d in decisions.iter().filter(|d| !d.withheld) {
        if illumination.is_lit(d.gate_index) {
            gates_lit += 1;
            clicks_lit += u64::from(d.click);
        } else {
            gates_dark += 1;
            clicks_dark += u64::from(d.click);
        }
    }
    if gates_lit == 0 || gates_dark == 0 {
        return Err(Error::InsufficientData(format!(
            "need both lit and dark gates, got {gates_lit} lit and {gates_dark} dark"
        )));
    }
    let p_pd = T::lit(clicks_lit as f64 / gates_lit as f64);
    let p_dk = T::lit(clicks_dark as f64 / gates_dark as f64);
    let efficiency_est = poisson_mu.filter(|mu| *mu > T::zero()).map(|mu| {
        let ratio = (T::one() - p_pd) / (T::one() - p_dk);
        let est = -ratio.ln() / mu;
        if est.is_nan() {
            T::one()
        } else {
            est.max(T::zero()).min(T::one())
        }
    });
    Ok(SweepRow {
        v_th,
        gates_lit,
        clicks_lit,
        gates_dark,
        clicks_dark,
        p_pd,
        p_pd_ci: wilson_interval(clicks_lit, gates_lit, T::lit(Z95)),
        p_dk,
        p_dk_ci: wilson_interval(clicks_dark, gates_dark, T::lit(Z95)),
        efficiency_est,
        stream_checksum: 0,
    })
}

fn check_thresholds<T: Real>(thresholds: &[T]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(config_err("sweep needs at least one threshold"));
    }
    if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(config_err("sweep thresholds must be strictly increasing"));
    }
    Ok(())
}

/// Sweeps `v_th` over one fixed frame stream. Each row runs its own full
/// compensator pass; rows may be evaluated in parallel.
pub fn sweep_frames<T: Real>(
    frames: &FrameStream,
    illumination: &Illumination<T>,
    compensator: &CompensatorConfig<T>,
    adc: &AdcConfig<T>,
    thresholds: &[T],
) -> Result<SweepResult<T>> {
    check_thresholds(thresholds)?;
    let rows = thresholds
        .par_iter()
        .map(|&v_th| {
            let cfg = CompensatorConfig { v_th, ..compensator.clone() };
            let (decisions, _) = process_stream(frames, &cfg, adc)?;
            let mut row = count_statistics(&decisions, illumination, illumination.poisson_mu(), v_th)?;
            row.stream_checksum = frames.checksum();
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { rows })
}

/// Simulates the scenario once and sweeps the discrimination level over the
/// resulting stream of `channel`.
pub fn threshold_sweep<T: Real>(
    scenario: &Scenario<T>,
    compensator: &CompensatorConfig<T>,
    thresholds: &[T],
    channel: usize,
) -> Result<SweepResult<T>> {
    check_thresholds(thresholds)?;
    let sim = simulate_gate_train(scenario)?;
    let frames = sim.streams.get(channel).ok_or_else(|| config_err(format!("scenario has no channel {channel}")))?;
    sweep_frames(frames, &scenario.illumination, compensator, &scenario.adc, thresholds)
}

/// `p_dk` where the sweep's `p_pd` crosses `target`, interpolating log-linearly
/// in `p_dk` (linearly when either bracketing value is zero).
pub fn dark_at_efficiency<T: Real>(sweep: &SweepResult<T>, target: T) -> Result<T> {
    let rows = &sweep.rows;
    if let Some(r) = rows.iter().find(|r| r.p_pd == target) {
        return Ok(r.p_dk);
    }
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (hi, lo) = if a.p_pd >= b.p_pd { (a, b) } else { (b, a) };
        if hi.p_pd > target && target > lo.p_pd {
            let f = (hi.p_pd - target) / (hi.p_pd - lo.p_pd);
            let dk = if hi.p_dk > T::zero() && lo.p_dk > T::zero() {
                (hi.p_dk.ln() + f * (lo.p_dk.ln() - hi.p_dk.ln())).exp()
            } else {
                hi.p_dk + f * (lo.p_dk - hi.p_dk)
            };
            return Ok(dk);
        }
    }
    Err(Error::Unbracketed(format!("p_pd = {target} is outside the sweep's range")))
}

/// Ratio `p_dk_a / p_dk_b` at matched detection efficiency.
pub fn dark_at_matched_efficiency<T: Real>(a: &SweepResult<T>, b: &SweepResult<T>, target_p_pd: T) -> Result<T> {
    let dk_a = dark_at_efficiency(a, target_p_pd)?;
    let dk_b = dark_at_efficiency(b, target_p_pd)?;
    if dk_b == T::zero() {
        if dk_a == T::zero() {
            return Ok(T::one());
        }
        return Err(Error::Domain("reference sweep has zero dark count at the target".into()));
    }
    Ok(dk_a / dk_b)
}

pub fn write_sweep_csv<W: std::io::Write, T: Real>(mut w: W, sweep: &SweepResult<T>) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in &sweep.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.v_th,
            r.gates_lit,
            r.clicks_lit,
            r.gates_dark,
            r.clicks_dark,
            r.p_pd,
            r.p_pd_ci.0,
            r.p_pd_ci.1,
            r.p_dk,
            r.p_dk_ci.0,
            r.p_dk_ci.1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Binomial, Distribution};

    fn decision(gate: u64, click: bool) -> Decision<f64> {
        Decision { gate_index: gate, channel: 0, click, peak_v: 0.0, peak_sample: 4, withheld: false }
    }

    fn alternating() -> Illumination<f64> {
        Illumination::Alternating { mu: None }
    }

    #[test]
    fn no_clicks_anywhere() {
        let d: Vec<_> = (0..100).map(|g| decision(g, false)).collect();
        let r = count_statistics(&d, &alternating(), None, 0.1).unwrap();
        assert_eq!((r.p_pd, r.p_dk), (0.0, 0.0));
        assert_eq!((r.gates_lit, r.gates_dark), (50, 50));
        assert!(r.p_pd_ci.0 == 0.0 && r.p_pd_ci.1 > 0.0);
    }

    #[test]
    fn every_lit_gate_clicks() {
        let d: Vec<_> = (0..100).map(|g| decision(g, g % 2 == 0)).collect();
        let r = count_statistics(&d, &alternating(), None, 0.1).unwrap();
        assert_eq!((r.p_pd, r.p_dk), (1.0, 0.0));
    }

    #[test]
    fn withheld_decisions_do_not_count() {
        let mut d: Vec<_> = (0..10).map(|g| decision(g, true)).collect();
        for x in d.iter_mut().take(4) {
            x.withheld = true;
        }
        let r = count_statistics(&d, &alternating(), None, 0.0).unwrap();
        assert_eq!(r.gates_lit + r.gates_dark, 6);
    }

    #[test]
    fn missing_class_is_insufficient_data() {
        let d: Vec<_> = (0..10).map(|g| decision(g, true)).collect();
        let err = count_statistics(&d, &Illumination::AllLit { mu: None }, None, 0.0).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn poisson_correction_recovers_efficiency() {
        // p_lit = 1 - (1 - p_dk)·exp(-mu·eta) exactly.
        let (mu, eta, pdk) = (0.5f64, 0.2f64, 0.01f64);
        let n = 1_000_000u64;
        let p_lit = 1.0 - (1.0 - pdk) * (-mu * eta).exp();
        let lit_clicks = (p_lit * n as f64).round() as u64;
        let dark_clicks = (pdk * n as f64).round() as u64;
        let mut d = Vec::new();
        for i in 0..n {
            d.push(decision(2 * i, i < lit_clicks));
            d.push(decision(2 * i + 1, i < dark_clicks));
        }
        let r = count_statistics(&d, &alternating(), Some(mu), 0.0).unwrap();
        assert!((r.efficiency_est.unwrap() - eta).abs() < 1e-5);
    }

    #[test]
    fn wilson_brackets_the_estimate() {
        for (k, n) in [(0, 10), (10, 10), (3, 7), (500, 1000), (1, 1_000_000)] {
            let (lo, hi) = wilson_interval::<f64>(k, n, Z95);
            let p = k as f64 / n as f64;
            assert!(lo <= p && p <= hi && lo >= 0.0 && hi <= 1.0);
        }
        // Textbook value: 0 of 10 gives an upper bound of 0.2775.
        let (_, hi) = wilson_interval::<f64>(0, 10, Z95);
        assert!((hi - 0.2775).abs() < 1e-4);
    }

    #[test]
    fn wilson_coverage() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for p in [0.5, 0.05, 1e-3] {
            let law = Binomial::new(10_000, p).unwrap();
            let covered = (0..1000)
                .filter(|_| {
                    let k = law.sample(&mut rng);
                    let (lo, hi) = wilson_interval::<f64>(k, 10_000, Z95);
                    lo <= p && p <= hi
                })
                .count();
            assert!(covered >= 930, "p = {p}: coverage {covered}/1000");
        }
    }

    fn synthetic_sweep(points: &[(f64, f64, f64)]) -> SweepResult<f64> {
        SweepResult {
            rows: points
                .iter()
                .map(|&(v, pd, dk)| SweepRow {
                    v_th: v,
                    gates_lit: 1,
                    clicks_lit: 0,
                    gates_dark: 1,
                    clicks_dark: 0,
                    p_pd: pd,
                    p_pd_ci: (pd, pd),
                    p_dk: dk,
                    p_dk_ci: (dk, dk),
                    efficiency_est: None,
                    stream_checksum: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn matched_efficiency_rules() {
        let a = synthetic_sweep(&[(0.01, 0.2, 1e-3), (0.02, 0.1, 1e-4), (0.03, 0.01, 1e-5)]);
        assert_eq!(dark_at_matched_efficiency(&a, &a, 0.05).unwrap(), 1.0);
        // Halfway in p_pd between 1e-3 and 1e-4 on a log scale.
        let dk = dark_at_efficiency(&a, 0.15).unwrap();
        assert!((dk - 10f64.powf(-3.5)).abs() < 1e-12);
        assert!(matches!(dark_at_matched_efficiency(&a, &a, 0.5), Err(Error::Unbracketed(_))));
        let b = synthetic_sweep(&[(0.01, 0.2, 1e-2), (0.02, 0.1, 1e-3), (0.03, 0.01, 1e-4)]);
        assert!((dark_at_matched_efficiency(&a, &b, 0.05).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn thresholds_must_increase() {
        let s = Scenario::<f64> { n_gates: 100, ..Scenario::default() };
        let c = CompensatorConfig::default();
        assert!(threshold_sweep(&s, &c, &[0.02, 0.01], 0).unwrap_err().is_config());
        assert!(threshold_sweep(&s, &c, &[], 0).unwrap_err().is_config());
    }

    #[test]
    fn csv_header_is_exact() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &synthetic_sweep(&[(0.01, 0.5, 0.25)])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), SWEEP_CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "0.01,1,0,1,0,0.5,0.5,0.5,0.25,0.25,0.25");
    }
}
