use spadsim_core::charstats::{dark_at_matched_efficiency, threshold_sweep, write_sweep_csv};
use spadsim_core::SweepResult;

use super::{flush, Context, Report};
use crate::config::RunConfig;
use crate::error::CliError;

fn monotone(sweep: &SweepResult) -> bool {
    sweep.rows.windows(2).all(|w| w[1].p_pd <= w[0].p_pd && w[1].p_dk <= w[0].p_dk)
}

fn print_table(label: &str, sweep: &SweepResult) {
    println!("{label}");
    println!("{:>10} {:>12} {:>12} {:>10} {:>10}", "v_th", "p_pd", "p_dk", "clicks_lit", "clicks_dk");
    for r in &sweep.rows {
        println!("{:>10.5} {:>12.5e} {:>12.5e} {:>10} {:>10}", r.v_th, r.p_pd, r.p_dk, r.clicks_lit, r.clicks_dark);
    }
}

pub fn run(ctx: &Context) -> Result<Report, CliError> {
    let scenario = RunConfig::require(&ctx.config.scenario, "scenario")?;
    let compensator = RunConfig::require(&ctx.config.compensator, "compensator")?;
    let section = RunConfig::require(&ctx.config.sweep, "sweep")?;
    let thresholds = section.thresholds.values()?;

    let a = threshold_sweep(scenario, compensator, &thresholds, section.channel)?;
    let mut w = ctx.create("sweep.csv")?;
    write_sweep_csv(&mut w, &a)?;
    flush(w)?;
    print_table("sweep (scenario)", &a);

    let mut summary = format!(
        "sweep rows={} monotone={} checksum={:016x}",
        a.rows.len(),
        monotone(&a),
        a.rows.first().map_or(0, |r| r.stream_checksum)
    );

    if let Some(other) = &section.compare_scenario {
        let b = threshold_sweep(other, compensator, &thresholds, section.channel)?;
        let mut w = ctx.create("sweep_compare.csv")?;
        write_sweep_csv(&mut w, &b)?;
        flush(w)?;
        print_table("sweep (compare_scenario)", &b);
        let ratio = dark_at_matched_efficiency(&a, &b, section.target_p_pd)?;
        println!("p_dk(scenario) / p_dk(compare_scenario) at p_pd = {}: {ratio}", section.target_p_pd);
        summary.push_str(&format!(
            " compare_monotone={} target_p_pd={} dark_ratio={ratio}",
            monotone(&b),
            section.target_p_pd
        ));
    }
    Ok(Report::ok(summary))
}
