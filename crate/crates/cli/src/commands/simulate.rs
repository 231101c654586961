use rayon::prelude::*;
use spadsim_core::compensator::{process_stream, write_decisions};
use spadsim_core::sigmodel::simulate_gate_train;
use spadsim_core::sigmodel::{write_frames, write_ground_truth};
use spadsim_core::{Cause, Decision};

use super::{display, flush, Context, Report};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(ctx: &Context) -> Result<Report, CliError> {
    let scenario = RunConfig::require(&ctx.config.scenario, "scenario")?;
    let compensator = RunConfig::require(&ctx.config.compensator, "compensator")?;
    let sim = simulate_gate_train(scenario)?;

    let decisions: Vec<Vec<Decision>> = sim
        .streams
        .par_iter()
        .map(|s| process_stream(s, compensator, &scenario.adc).map(|(d, _)| d))
        .collect::<Result<_, _>>()?;

    for (stream, truth) in sim.streams.iter().zip(&sim.truth) {
        let c = stream.channel;
        let mut w = ctx.create(&format!("frames_ch{c}.bin"))?;
        write_frames(&mut w, stream)?;
        flush(w)?;
        let mut w = ctx.create(&format!("groundtruth_ch{c}.csv"))?;
        write_ground_truth(&mut w, truth)?;
        flush(w)?;
    }
    let mut w = ctx.create("decisions.csv")?;
    write_decisions(&mut w, &decisions.concat())?;
    flush(w)?;

    let mut avalanches = Vec::new();
    let mut clicks = Vec::new();
    let mut checksums = Vec::new();
    for ((stream, truth), dec) in sim.streams.iter().zip(&sim.truth).zip(&decisions) {
        let aval = truth.records.len() - truth.count(Cause::None);
        let click = dec.iter().filter(|d| d.click && !d.withheld).count();
        let withheld = dec.iter().filter(|d| d.withheld).count();
        println!(
            "channel {}: {} gates, {} avalanches (photon {}, dark {}, afterpulse {}, crosstalk {}), {} clicks, {} withheld",
            stream.channel,
            stream.n_gates(),
            aval,
            truth.count(Cause::Photon),
            truth.count(Cause::Dark),
            truth.count(Cause::Afterpulse),
            truth.count(Cause::Crosstalk),
            click,
            withheld,
        );
        avalanches.push(aval.to_string());
        clicks.push(click.to_string());
        checksums.push(format!("{:016x}", stream.checksum()));
    }
    println!("wrote frames, ground truth and decisions to {}", display(&ctx.out_dir));
    Ok(Report::ok(format!(
        "simulate gates={} channels={} avalanches={} clicks={} checksum={}",
        scenario.n_gates,
        sim.streams.len(),
        avalanches.join(","),
        clicks.join(","),
        checksums.join(","),
    )))
}
