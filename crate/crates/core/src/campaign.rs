//! Runs an [`ExperimentConfig`] and renders its CSV.
//!
//! Every campaign writes one CSV: a header, one row per measurement, then
//! summary lines starting with `#`. The CSV holds no timing information, so
//! reruns with the same configuration are byte-identical; timings are
//! returned separately as log lines.

use crate::config::{Campaign, ExperimentConfig};
use crate::experiments::{run_c2_sweep, run_snr_curves, BerPoint, Link};
use crate::phasefn::SearchAxis;
use crate::security::{bound_report, brute_force_search, estimate_crossing, MismatchInterval};
use crate::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub csv: Vec<u8>,
    /// Human-readable progress and timing lines.
    pub log: Vec<String>,
}

#[derive(Serialize)]
struct MismatchRow<'a> {
    variant: &'a str,
    delta: f64,
    trials: u64,
    bits: u64,
    bit_errors: u64,
    ber: f64,
    ci95: f64,
}

#[derive(Serialize)]
struct SnrRow<'a> {
    variant: &'a str,
    delta: f64,
    snr_db: f64,
    trials: u64,
    bits: u64,
    bit_errors: u64,
    ber: f64,
    ci95: f64,
}

#[derive(Serialize)]
struct C2Row {
    c2: f64,
    delta: f64,
    trials: u64,
    bits: u64,
    bit_errors: u64,
    ber: f64,
    ci95: f64,
}

#[derive(Serialize)]
struct SearchRow {
    candidates: u64,
    best_c2: f64,
    best_kappa: f64,
    best_ber: f64,
    success: bool,
}

#[derive(Serialize)]
struct BoundRow<'a> {
    variant: &'a str,
    m: usize,
    df_dc2: f64,
    delta_max: f64,
    degenerate: bool,
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("CSV output: {e}"))
}

struct Sheet {
    writer: csv::Writer<Vec<u8>>,
    summary: String,
}

impl Sheet {
    fn new() -> Self {
        Sheet {
            writer: csv::Writer::from_writer(Vec::new()),
            summary: String::new(),
        }
    }

    fn row(&mut self, row: impl Serialize) -> Result<()> {
        self.writer.serialize(row).map_err(csv_err)
    }

    fn note(&mut self, line: impl AsRef<str>) {
        let _ = writeln!(self.summary, "# {}", line.as_ref());
    }

    fn interval(&mut self, key: &str, interval: &MismatchInterval) {
        let c = interval.crossing;
        let bracket = c.bracket.map_or("none".to_string(), |(lo, hi)| format!("{lo:e}..{hi:e}"));
        self.note(format!(
            "{key} delta_star={:e} status={} bracket={bracket} threshold={:e}",
            c.delta_star,
            c.status.as_str(),
            interval.threshold
        ));
    }

    fn finish(mut self, cfg: &ExperimentConfig) -> Result<Vec<u8>> {
        self.note(format!("config_hash={} seed={}", cfg.hash()?, cfg.scenario.seed));
        let mut out = self.writer.into_inner().map_err(csv_err)?;
        out.extend_from_slice(self.summary.as_bytes());
        Ok(out)
    }
}

fn point_stats(p: &BerPoint) -> (u64, u64, u64, f64, f64) {
    (p.trials, p.bits, p.errors, p.ber, p.ci95())
}

pub fn run(cfg: &ExperimentConfig) -> Result<CampaignOutput> {
    cfg.validate()?;
    let mut sheet = Sheet::new();
    let mut log = Vec::new();
    let started = Instant::now();
    match &cfg.campaign {
        Campaign::BerVsMismatch {
            axis, deltas, threshold, ..
        } => {
            for ls in cfg.scenarios()? {
                let t = Instant::now();
                let spec = ExperimentConfig::mismatch_spec(*axis, deltas, *threshold, &ls.scenario)?;
                let curve = Link::new(&ls.scenario)?.mismatch_curve(*axis, &spec.delta_grid)?;
                let bers: Vec<f64> = curve.iter().map(|p| p.ber).collect();
                let interval = MismatchInterval {
                    crossing: estimate_crossing(&spec.delta_grid, &bers, *threshold)?,
                    threshold: *threshold,
                    curve,
                };
                for p in &interval.curve {
                    let (trials, bits, bit_errors, ber, ci95) = point_stats(p);
                    sheet.row(MismatchRow {
                        variant: &ls.label,
                        delta: p.sweep_value,
                        trials,
                        bits,
                        bit_errors,
                        ber,
                        ci95,
                    })?;
                }
                sheet.interval(&format!("variant={}", ls.label), &interval);
                log.push(format!(
                    "{}: delta_star {:.3e} ({}) in {:.1?}",
                    ls.label,
                    interval.delta_star(),
                    interval.crossing.status.as_str(),
                    t.elapsed()
                ));
            }
        }
        Campaign::BerVsSnr {
            snr_db, axis, deltas, ..
        } => {
            let snr_grid = snr_db.values()?;
            for ls in cfg.scenarios()? {
                let t = Instant::now();
                let curves = run_snr_curves(&ls.scenario, &snr_grid, *axis, deltas)?;
                for (curve, &delta) in curves.iter().zip(deltas) {
                    for p in curve {
                        let (trials, bits, bit_errors, ber, ci95) = point_stats(p);
                        sheet.row(SnrRow {
                            variant: &ls.label,
                            delta,
                            snr_db: p.sweep_value,
                            trials,
                            bits,
                            bit_errors,
                            ber,
                            ci95,
                        })?;
                    }
                }
                log.push(format!("{}: {} curves in {:.1?}", ls.label, deltas.len(), t.elapsed()));
            }
        }
        Campaign::C2Sweep { c2, deltas, threshold } => {
            let base = cfg.scenario.build(None, None)?;
            let spec = ExperimentConfig::mismatch_spec(SearchAxis::C2, deltas, *threshold, &base)?;
            for entry in run_c2_sweep(&base, &c2.values()?, &spec)? {
                for p in &entry.interval.curve {
                    let (trials, bits, bit_errors, ber, ci95) = point_stats(p);
                    sheet.row(C2Row {
                        c2: entry.c2,
                        delta: p.sweep_value,
                        trials,
                        bits,
                        bit_errors,
                        ber,
                        ci95,
                    })?;
                }
                sheet.interval(
                    &format!("c2={} degenerate_subcarriers={}", entry.c2, entry.degenerate_subcarriers),
                    &entry.interval,
                );
                log.push(format!("c2 {}: delta_star {:.3e}", entry.c2, entry.interval.delta_star()));
            }
        }
        Campaign::EavesdropSearch { .. } => {
            let eve = cfg.eve_model()?.expect("campaign is a search");
            let scenario = cfg.scenario.build(None, None)?;
            let result = brute_force_search(&eve, &scenario)?;
            sheet.row(SearchRow {
                candidates: result.candidates,
                best_c2: result.best.c2,
                best_kappa: result.best.kappa,
                best_ber: result.best_ber,
                success: result.success,
            })?;
            sheet.note(format!("threshold={:e} pilot_frames={}", eve.success_ber_threshold, eve.frames.len()));
            log.push(format!(
                "searched {} candidates in {:.2?} ({:.2?} each); success={}",
                result.candidates,
                result.elapsed,
                result.per_candidate(),
                result.success
            ));
        }
        Campaign::BoundReport {
            epsilon, kappa_range, ..
        } => {
            for ls in cfg.scenarios()? {
                let report = bound_report(&ls.scenario.afdm.phase, ls.scenario.afdm.n, *epsilon, *kappa_range)?;
                for (m, b) in &report.per_subcarrier {
                    sheet.row(BoundRow {
                        variant: &ls.label,
                        m: *m,
                        df_dc2: report.phase.df_dc2(*m),
                        delta_max: b.delta_max,
                        degenerate: b.degenerate,
                    })?;
                }
                let joint = report.joint.as_ref().map_or("n/a".to_string(), |j| j.exponent.to_string());
                sheet.note(format!(
                    "variant={} system_bound={:e} argmin={} exponent_c2={} exponent_joint={joint}",
                    ls.label, report.system.delta_max, report.system.argmin, report.c2_only.exponent
                ));
                log.push(format!("[{}]\n{report}", ls.label));
            }
        }
    }
    log.push(format!("{} finished in {:.1?}", cfg.campaign.kind(), started.elapsed()));
    Ok(CampaignOutput {
        csv: sheet.finish(cfg)?,
        log,
    })
}

/// Analytic report for every scenario in the configuration, whatever its
/// campaign kind.
pub fn bound_tables(cfg: &ExperimentConfig, epsilon: f64, kappa_range: f64) -> Result<String> {
    let mut out = String::new();
    for ls in cfg.scenarios()? {
        let report = bound_report(&ls.scenario.afdm.phase, ls.scenario.afdm.n, epsilon, kappa_range)?;
        let _ = writeln!(out, "[{}]\n{report}", ls.label);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
output = "x.csv"
[scenario]
seed = 3
trials = 30
stop_after_errors = 0
phase = { kind = "conventional", c2 = 0.2, kappa = 0.41421356237309515 }
[campaign]
kind = "ber-vs-mismatch"
deltas = [1e-6, 1e-5, 1e-4, 1e-3]
"#;

    #[test]
    fn mismatch_csv_layout() {
        let cfg = ExperimentConfig::from_toml(CFG).unwrap();
        let out = run(&cfg).unwrap();
        let text = String::from_utf8(out.csv.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "variant,delta,trials,bits,bit_errors,ber,ci95");
        assert!(lines[1].starts_with("baseline,1e-6,30,3840,"));
        assert!(lines[5].starts_with("# variant=baseline delta_star="));
        assert!(lines[6].starts_with("# config_hash="));
        assert_eq!(run(&cfg).unwrap().csv, out.csv);
    }

    #[test]
    fn bound_report_campaign() {
        let cfg = ExperimentConfig::from_toml(&CFG.replace(
            "kind = \"ber-vs-mismatch\"\ndeltas = [1e-6, 1e-5, 1e-4, 1e-3]",
            "kind = \"bound-report\"",
        ))
        .unwrap();
        let text = String::from_utf8(run(&cfg).unwrap().csv).unwrap();
        assert!(text.contains("exponent_c2=2"), "{text}");
    }
}
