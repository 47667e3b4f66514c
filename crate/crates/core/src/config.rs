//! Experiment files.
//!
//! An experiment is a TOML document with three parts: `output` (CSV path),
//! `[scenario]` (link and Monte Carlo settings) and `[campaign]` (what to
//! run, selected by `kind`). Unknown keys are rejected and every scenario
//! the campaign will build is validated at load time.

use crate::channel::ChannelProfile;
use crate::constellation::Modulation;
use crate::experiments::{check_grid, SimScenario};
use crate::modem::AfdmParams;
use crate::phasefn::{PhaseFunction, SearchAxis};
use crate::security::{AxisGrid, EveModel, MismatchSweepSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: PathBuf,
    pub scenario: ScenarioConfig,
    pub campaign: Campaign,
}

fn default_n() -> usize {
    64
}
fn default_trials() -> u64 {
    10_000
}
fn default_snr() -> f64 {
    25.0
}
fn default_true() -> bool {
    true
}
fn default_stop() -> u64 {
    200
}
fn default_threshold() -> f64 {
    1e-3
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_kappa_range() -> f64 {
    1.0
}
fn default_axis() -> SearchAxis {
    SearchAxis::C2
}
fn default_frames() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    pub phase: PhaseFunction,
    /// Overrides `(2 nu_max + 1) / (2N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    /// Prefix length; defaults to the largest channel delay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpp_len: Option<usize>,
    #[serde(default = "ChannelProfile::four_tap_ltv")]
    pub channel: ChannelProfile,
    #[serde(default)]
    pub modulation: Modulation,
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_true")]
    pub redraw_channel: bool,
    /// 0 disables early termination.
    #[serde(default = "default_stop")]
    pub stop_after_errors: u64,
}

impl ScenarioConfig {
    /// Scenario with an optional replacement phase law and block length.
    pub fn build(&self, phase: Option<PhaseFunction>, n: Option<usize>) -> Result<SimScenario> {
        let n = n.unwrap_or(self.n);
        let phase = phase.unwrap_or(self.phase);
        let cpp_len = self.cpp_len.unwrap_or_else(|| self.channel.max_delay());
        let afdm = match self.c1 {
            Some(c1) => AfdmParams::with_c1(n, c1, phase, cpp_len)?,
            None => AfdmParams::new(n, self.channel.nu_max, phase, cpp_len)?,
        };
        let scenario = SimScenario {
            afdm,
            channel: self.channel.clone(),
            modulation: self.modulation,
            master_seed: self.seed,
            trials: self.trials,
            snr_db: self.snr_db,
            redraw_channel: self.redraw_channel,
            stop_after_errors: self.stop_after_errors,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// A labelled alternative to the scenario's phase law or block length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<PhaseFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

/// A list of values, written either explicitly or as a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    /// `10^(log10_start + i / per_decade)` up to `10^log10_stop`.
    Log {
        log10_start: f64,
        log10_stop: f64,
        per_decade: u32,
    },
    /// `start, start + step, ...` up to `stop`.
    Linear { start: f64, stop: f64, step: f64 },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let steps = |span: f64, per: f64| -> Result<usize> {
            let count = span * per;
            if !(0.0..1e7).contains(&count) {
                return Err(Error::config("grid range is empty or too large"));
            }
            Ok(count.round() as usize)
        };
        let v = match *self {
            Grid::Values(ref v) => v.clone(),
            Grid::Log {
                log10_start,
                log10_stop,
                per_decade,
            } => {
                if per_decade == 0 {
                    return Err(Error::config("per_decade must be positive"));
                }
                let k = per_decade as f64;
                let count = steps(log10_stop - log10_start, k)?;
                (0..=count).map(|i| 10f64.powf(log10_start + i as f64 / k)).collect()
            }
            Grid::Linear { start, stop, step } => {
                if !(step > 0.0) {
                    return Err(Error::config("grid step must be positive"));
                }
                let count = steps(stop - start, step.recip())?;
                (0..=count).map(|i| start + step * i as f64).collect()
            }
        };
        check_grid(&v)?;
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchAxisConfig {
    pub axis: SearchAxis,
    pub grid: Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Campaign {
    /// Eavesdropper BER against parameter offset, with the crossing offset.
    BerVsMismatch {
        #[serde(default = "default_axis")]
        axis: SearchAxis,
        deltas: Grid,
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        variants: Vec<Variant>,
    },
    /// BER against SNR for each listed offset (0 is the legitimate link).
    BerVsSnr {
        snr_db: Grid,
        #[serde(default = "default_axis")]
        axis: SearchAxis,
        deltas: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        variants: Vec<Variant>,
    },
    /// Crossing offset for each transmitter c2.
    C2Sweep {
        c2: Grid,
        deltas: Grid,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    /// Exhaustive search over the listed axes using known pilot frames.
    EavesdropSearch {
        axes: Vec<SearchAxisConfig>,
        #[serde(default = "default_frames")]
        frames: u64,
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    /// Analytic bounds and search-cost estimates, no simulation.
    BoundReport {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
        #[serde(default = "default_kappa_range")]
        kappa_range: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        variants: Vec<Variant>,
    },
}

impl Campaign {
    pub fn kind(&self) -> &'static str {
        match self {
            Campaign::BerVsMismatch { .. } => "ber-vs-mismatch",
            Campaign::BerVsSnr { .. } => "ber-vs-snr",
            Campaign::C2Sweep { .. } => "c2-sweep",
            Campaign::EavesdropSearch { .. } => "eavesdrop-search",
            Campaign::BoundReport { .. } => "bound-report",
        }
    }
}

/// A scenario ready to run, tagged with its variant label.
#[derive(Debug, Clone)]
pub struct LabelledScenario {
    pub label: String,
    pub scenario: SimScenario,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialization, so overrides applied on
    /// the command line change the hash. The output path is left out since
    /// it does not affect results.
    pub fn hash(&self) -> Result<String> {
        let canonical = ExperimentConfig {
            output: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    fn variants(&self) -> &[Variant] {
        match &self.campaign {
            Campaign::BerVsMismatch { variants, .. }
            | Campaign::BerVsSnr { variants, .. }
            | Campaign::BoundReport { variants, .. } => variants,
            _ => &[],
        }
    }

    /// One scenario per variant, or the bare scenario labelled `baseline`.
    pub fn scenarios(&self) -> Result<Vec<LabelledScenario>> {
        let variants = self.variants();
        if variants.is_empty() {
            return Ok(vec![LabelledScenario {
                label: "baseline".into(),
                scenario: self.scenario.build(None, None)?,
            }]);
        }
        variants
            .iter()
            .map(|v| {
                Ok(LabelledScenario {
                    label: v.label.clone(),
                    scenario: self.scenario.build(v.phase, v.n)?,
                })
            })
            .collect()
    }

    pub fn mismatch_spec(axis: SearchAxis, deltas: &Grid, threshold: f64, scenario: &SimScenario) -> Result<MismatchSweepSpec> {
        let spec = MismatchSweepSpec {
            threshold,
            snr_db: scenario.snr_db,
            trials: scenario.trials,
            ..MismatchSweepSpec::new(axis, deltas.values()?)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn eve_model(&self) -> Result<Option<EveModel>> {
        let Campaign::EavesdropSearch { axes, frames, threshold } = &self.campaign else {
            return Ok(None);
        };
        let axes = axes
            .iter()
            .map(|a| {
                Ok(AxisGrid {
                    axis: a.axis,
                    values: a.grid.values()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let eve = EveModel {
            axes,
            frames: (0..*frames).collect(),
            success_ber_threshold: *threshold,
        };
        eve.validate()?;
        Ok(Some(eve))
    }

    pub fn validate(&self) -> Result<()> {
        if self.output.as_os_str().is_empty() {
            return Err(Error::config("output path is empty"));
        }
        let mut labels: Vec<&str> = self.variants().iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("variant labels must be unique"));
        }
        let scenarios = self.scenarios()?;
        match &self.campaign {
            Campaign::BerVsMismatch {
                axis, deltas, threshold, ..
            } => {
                for s in &scenarios {
                    Self::mismatch_spec(*axis, deltas, *threshold, &s.scenario)?;
                    s.scenario.afdm.phase.derivative(*axis, 0)?;
                }
            }
            Campaign::BerVsSnr { snr_db, axis, deltas, .. } => {
                snr_db.values()?;
                if deltas.is_empty() || deltas.iter().any(|d| !d.is_finite()) {
                    return Err(Error::config("deltas must be a non-empty list of finite offsets"));
                }
                for s in &scenarios {
                    s.scenario.afdm.phase.derivative(*axis, 0)?;
                }
            }
            Campaign::C2Sweep { c2, deltas, threshold } => {
                for value in c2.values()? {
                    let s = self.scenario.build(Some(self.scenario.phase.with_c2(value)), None)?;
                    Self::mismatch_spec(SearchAxis::C2, deltas, *threshold, &s)?;
                }
            }
            Campaign::EavesdropSearch { .. } => {
                self.eve_model()?;
            }
            Campaign::BoundReport {
                epsilon, kappa_range, ..
            } => {
                if !(*epsilon > 0.0 && *kappa_range > 0.0) {
                    return Err(Error::config("epsilon and kappa_range must be positive"));
                }
            }
        }
        Ok(())
    }
}
