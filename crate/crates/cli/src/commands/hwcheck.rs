use spadsim_core::hwbudget::{budget_check, default_harness, min_length_for_bandwidth, rf_bandwidth, thermal_flux};

use super::{Context, Report};
use crate::config::RunConfig;
use crate::error::CliError;

pub fn run(ctx: &Context) -> Result<Report, CliError> {
    let hw = RunConfig::require(&ctx.config.hw, "hw")?;

    let bw = rf_bandwidth(&hw.rf)?;
    let rf = &hw.rf;
    println!(
        "RF link: z0 {} ohm, {} mm x {:e} H/mm, shunt {:e} F",
        rf.z0_ohm, rf.wire_length_mm, rf.wire_inductance_per_mm, rf.shunt_c_f
    );
    if bw.at_ceiling {
        println!("  -3 dB bandwidth   >= {:.4} GHz (no crossing below the ceiling)", bw.hz / 1e9);
    } else {
        println!("  -3 dB bandwidth   {:.4} GHz", bw.hz / 1e9);
    }
    let mut summary = format!("hwcheck f3db_hz={} at_ceiling={}", bw.hz, bw.at_ceiling);
    if let Some(target) = hw.target_bandwidth_hz {
        let limit = min_length_for_bandwidth(rf, target)?;
        let note = if limit.saturated { " (search bound, saturated)" } else { "" };
        println!("  max wire length for {:.3} GHz: {:.4} mm{note}", target / 1e9, limit.length_mm);
        summary.push_str(&format!(" max_length_mm={} saturated={}", limit.length_mm, limit.saturated));
    }

    let (wires, source) = match &hw.wires {
        Some(w) => (w.clone(), "config"),
        None => (default_harness(), "calibration default"),
    };
    let flux = thermal_flux(&wires, hw.delta_t_k)?;
    println!("Thermal load at dT = {} K ({source} harness):", hw.delta_t_k);
    println!("  {:<32} {:>6} {:>12}", "wire group", "count", "flux mW");
    for (w, (label, q)) in wires.iter().zip(&flux.per_wire_mw) {
        println!("  {label:<32} {:>6} {q:>12.3}", w.count);
    }
    println!("  {:<32} {:>6} {:>12.3}", "total", "", flux.total_mw);

    let check = budget_check(flux.total_mw, hw.budget_mw);
    let verdict = if check.pass { "PASS" } else { "FAIL" };
    println!("Budget {} mW: {verdict}, margin {:.3} mW", hw.budget_mw, check.margin_mw);
    summary.push_str(&format!(
        " harness={} flux_mw={} budget_mw={} margin_mw={} pass={}",
        source.replace(' ', "_"),
        flux.total_mw,
        hw.budget_mw,
        check.margin_mw,
        check.pass
    ));
    let failure =
        (!check.pass).then(|| CliError::Budget(format!("{} mW exceeds the {} mW budget", flux.total_mw, hw.budget_mw)));
    Ok(Report { summary, failure })
}
