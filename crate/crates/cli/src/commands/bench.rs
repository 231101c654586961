use std::hash::{DefaultHasher, Hash, Hasher};
use std::time::Instant;

use spadsim_core::compensator::process_stream;
use spadsim_core::sigmodel::simulate_gate_train;
use spadsim_core::{Decision, Scenario};

use super::{Context, Report};
use crate::config::RunConfig;
use crate::error::CliError;

pub const MIN_TRIALS: usize = 5;

fn decisions_checksum(decisions: &[Decision]) -> u64 {
    let mut h = DefaultHasher::new();
    for d in decisions {
        (d.gate_index, d.click, d.peak_v.to_bits(), d.peak_sample, d.withheld).hash(&mut h);
    }
    h.finish()
}

pub fn run(ctx: &Context, trials: usize) -> Result<Report, CliError> {
    let scenario = RunConfig::require(&ctx.config.scenario, "scenario")?;
    let compensator = ctx.config.compensator.clone().unwrap_or_default();
    compensator.validate()?;
    if trials < MIN_TRIALS {
        return Err(CliError::Config(format!("bench needs at least {MIN_TRIALS} trials")));
    }
    let warmup = compensator.warmup() as u64;
    if scenario.n_gates < warmup {
        return Err(CliError::Config(format!(
            "n_gates ({}) is below the compensator warm-up ({warmup}); nothing would be measured",
            scenario.n_gates
        )));
    }

    // Synthesis is outside the timed region; only channel 0 is measured.
    let single = Scenario { channels: Some(1), devices: scenario.devices[..1].to_vec(), ..scenario.clone() };
    let sim = simulate_gate_train(&single)?;
    let frames = &sim.streams[0];
    let n = frames.n_gates() as f64;

    let mut rates = Vec::with_capacity(trials);
    let mut checksum = None;
    for _ in 0..trials {
        let start = Instant::now();
        let (decisions, _) = process_stream(frames, &compensator, &single.adc)?;
        let secs = start.elapsed().as_secs_f64();
        rates.push(n / secs.max(1e-12));
        let sum = decisions_checksum(&decisions);
        if *checksum.get_or_insert(sum) != sum {
            return Err(CliError::Runtime("decisions differ between trials".into()));
        }
    }
    rates.sort_by(f64::total_cmp);
    let (min, median, max) = (rates[0], rates[rates.len() / 2], rates[rates.len() - 1]);
    let ns_per_gate = 1e9 / median;

    println!(
        "process_stream, channel 0: {} gates x {} samples, {} bits, window_n {}",
        frames.n_gates(),
        frames.samples_per_gate,
        frames.bits,
        compensator.window_n
    );
    println!("  {trials} trials: min {min:.4e}  median {median:.4e}  max {max:.4e} gates/s");
    println!("  median {ns_per_gate:.1} ns/gate");
    Ok(Report::ok(format!(
        "bench gates={} samples_per_gate={} bits={} trials={trials} gates_per_s_min={min:.0} \
         gates_per_s_median={median:.0} gates_per_s_max={max:.0} ns_per_gate={ns_per_gate:.2} \
         decisions_checksum={:016x}",
        frames.n_gates(),
        frames.samples_per_gate,
        frames.bits,
        checksum.unwrap_or(0),
    )))
}
