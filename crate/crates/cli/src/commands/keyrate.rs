use std::io::Write;

use rayon::prelude::*;
use spadsim_core::keyrate::{dark_count_gain, gain_and_qber, loss_for_gain, shor_preskill_rate};
use spadsim_core::{Error, KeyRateParams};

use super::{flush, Context, Report};
use crate::config::{Grid, RunConfig};
use crate::error::CliError;

fn grid_or(grid: &Option<Grid>, fallback: f64) -> Result<Vec<f64>, CliError> {
    match grid {
        Some(g) => g.values(),
        None => Ok(vec![fallback]),
    }
}

struct RateRow {
    params: KeyRateParams,
    q: f64,
    /// Undefined when nothing clicks.
    e: Option<f64>,
    r: f64,
}

fn rate_row(params: KeyRateParams) -> Result<RateRow, CliError> {
    params.validate()?;
    match gain_and_qber(&params) {
        Ok((q, e)) => {
            let r = shor_preskill_rate(q, e, params.sift_q, params.f_ec)?;
            Ok(RateRow { params, q, e: Some(e), r })
        }
        Err(Error::Domain(_)) => Ok(RateRow { params, q: 0.0, e: None, r: 0.0 }),
        Err(e) => Err(e.into()),
    }
}

pub fn run(ctx: &Context) -> Result<Report, CliError> {
    let section = RunConfig::require(&ctx.config.keyrate, "keyrate")?;
    let base = &section.params;
    base.validate()?;

    let losses = grid_or(&section.loss_db, base.channel_loss_db)?;
    let mus = grid_or(&section.mu, base.mu)?;
    let darks = grid_or(&section.p_dk, base.p_dk)?;
    let mut points = Vec::with_capacity(losses.len() * mus.len() * darks.len());
    for &channel_loss_db in &losses {
        for &mu in &mus {
            for &p_dk in &darks {
                points.push(KeyRateParams { channel_loss_db, mu, p_dk, ..base.clone() });
            }
        }
    }
    let rows: Vec<RateRow> = points.into_par_iter().map(rate_row).collect::<Result<_, _>>()?;

    let mut w = ctx.create("keyrate.csv")?;
    writeln!(w, "loss_db,mu,p_dk,Q,E,R")?;
    for row in &rows {
        let e = row.e.map(|e| e.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", row.params.channel_loss_db, row.params.mu, row.params.p_dk, row.q, e, row.r)?;
    }
    flush(w)?;

    let gain_losses = match (&section.gain_loss_db, &section.loss_db) {
        (Some(g), _) | (None, Some(g)) => g.values()?,
        (None, None) => (0..=160).map(|i| 0.25 * i as f64).collect(),
    };
    let factor = section.reduction_factor;
    let gains: Vec<(f64, Option<f64>)> = gain_losses
        .par_iter()
        .map(|&loss| match dark_count_gain(&KeyRateParams { channel_loss_db: loss, ..base.clone() }, factor) {
            Ok(g) => Ok((loss, Some(g))),
            Err(Error::NoKey) => Ok((loss, None)),
            Err(e) => Err(CliError::from(e)),
        })
        .collect::<Result<_, _>>()?;
    let mut w = ctx.create("gain.csv")?;
    writeln!(w, "loss_db,ratio")?;
    for (loss, g) in &gains {
        if let Some(g) = g {
            writeln!(w, "{loss},{g}")?;
        }
    }
    flush(w)?;

    let kept: Vec<(f64, f64)> = gains.iter().filter_map(|(l, g)| g.map(|g| (*l, g))).collect();
    let max_rate = rows.iter().map(|r| r.r).fold(0.0, f64::max);
    println!("{} rate points, max R = {max_rate:e} per pulse", rows.len());
    match kept.last() {
        Some((l, g)) => {
            println!("dark-count gain (p_dk / {factor}): {} losses with key, last at {l} dB with ratio {g}", kept.len())
        }
        None => println!("dark-count gain (p_dk / {factor}): no loss on the grid yields key"),
    }

    let mut summary = format!("keyrate points={} gain_rows={} max_R={max_rate}", rows.len(), kept.len());
    if let Some(target) = section.target_gain {
        match loss_for_gain(base, factor, target, &gain_losses)? {
            Some(loss) => {
                let at = dark_count_gain(&KeyRateParams { channel_loss_db: loss, ..base.clone() }, factor);
                let at = at.map(|g| g.to_string()).unwrap_or_else(|_| "no_key".into());
                println!("gain reaches {target} at {loss} dB (ratio there {at})");
                summary.push_str(&format!(" target_gain={target} crossing_loss_db={loss} ratio_at_crossing={at}"));
            }
            None => {
                println!("gain never reaches {target} on the loss grid");
                summary.push_str(&format!(" target_gain={target} crossing_loss_db=none"));
            }
        }
    }
    Ok(Report::ok(summary))
}
