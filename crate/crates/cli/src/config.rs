//! The JSON run configuration.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use spadsim_core::{CompensatorConfig, KeyRateParams, RfLinkSpec, Scenario, WireSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<Scenario>,
    pub compensator: Option<CompensatorConfig>,
    pub sweep: Option<SweepSection>,
    pub keyrate: Option<KeyRateSection>,
    pub hw: Option<HwSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        section.as_ref().ok_or_else(|| CliError::Config(format!("this subcommand needs a `{name}` section")))
    }

    /// Applies the `--seed` override to every scenario in the file.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(s) = &mut self.scenario {
            s.seed = seed;
        }
        if let Some(s) = self.sweep.as_mut().and_then(|s| s.compare_scenario.as_mut()) {
            s.seed = seed;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

/// Either an explicit list of values or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(Range),
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Grid::List(v) => Ok(v.clone()),
            Grid::Range(r) => {
                if r.count == 0 || !r.min.is_finite() || !r.max.is_finite() || r.min > r.max {
                    return Err(CliError::Config("range needs count >= 1 and min <= max".into()));
                }
                if r.count == 1 {
                    return Ok(vec![r.min]);
                }
                let step = |i: usize| i as f64 / (r.count - 1) as f64;
                match r.spacing {
                    Spacing::Linear => Ok((0..r.count).map(|i| r.min + (r.max - r.min) * step(i)).collect()),
                    Spacing::Log => {
                        if r.min <= 0.0 {
                            return Err(CliError::Config("log spacing needs min > 0".into()));
                        }
                        let (a, b) = (r.min.ln(), r.max.ln());
                        Ok((0..r.count).map(|i| (a + (b - a) * step(i)).exp()).collect())
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub thresholds: Grid,
    #[serde(default)]
    pub channel: usize,
    /// Second detector for an A/B comparison at matched efficiency.
    pub compare_scenario: Option<Scenario>,
    #[serde(default = "default_target_p_pd")]
    pub target_p_pd: f64,
}

fn default_target_p_pd() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRateSection {
    #[serde(default)]
    pub params: KeyRateParams,
    /// Grids override the matching field of `params`.
    pub loss_db: Option<Grid>,
    pub mu: Option<Grid>,
    pub p_dk: Option<Grid>,
    #[serde(default = "default_reduction")]
    pub reduction_factor: f64,
    /// Losses for the dark-count gain curve; defaults to `loss_db`, else 0..40 dB.
    pub gain_loss_db: Option<Grid>,
    /// Gain ratio whose crossing loss is reported.
    pub target_gain: Option<f64>,
}

fn default_reduction() -> f64 {
    10.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwSection {
    #[serde(default)]
    pub rf: RfLinkSpec,
    pub target_bandwidth_hz: Option<f64>,
    /// Absent means the built-in calibration harness.
    pub wires: Option<Vec<WireSpec>>,
    #[serde(default = "default_delta_t")]
    pub delta_t_k: f64,
    #[serde(default = "default_budget")]
    pub budget_mw: f64,
}

fn default_delta_t() -> f64 {
    100.0
}

fn default_budget() -> f64 {
    250.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
}
