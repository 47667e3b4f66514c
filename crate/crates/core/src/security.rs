//! Eavesdropper analysis: mismatch rotation, analytic bounds on the
//! tolerable parameter error, measured mismatch intervals and brute-force
//! parameter search.

use crate::experiments::{check_grid, BerPoint, Link, SimScenario};
use crate::phasefn::{cis_cycles, PhaseFunction, PhaseKind, SearchAxis};
use crate::{Error, Result, C64};
use std::f64::consts::PI;
use std::fmt;
use std::time::{Duration, Instant};

/// Per-subcarrier factor `e^{j2pi (f(c,k) - f(c_hat,k))}` that turns the
/// matched receiver output into the output of a receiver using `candidate`.
pub fn mismatch_rotation(phase: &PhaseFunction, candidate: &PhaseFunction, n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| cis_cycles(phase.eval_mod1(k) - candidate.eval_mod1(k)))
        .collect()
}

/// First-order prediction of symbol `k` after demodulating with `c2 + delta`:
/// `x_k e^{-j2pi delta df/dc2}`.
pub fn predict_mismatched_symbol(x: C64, phase: &PhaseFunction, delta: f64, k: usize) -> C64 {
    x * cis_cycles(-delta * phase.df_dc2(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MismatchBound {
    /// Largest offset keeping the phase error within epsilon; infinite when
    /// the derivative vanishes.
    pub delta_max: f64,
    pub degenerate: bool,
}

/// `epsilon / (2 pi |df/dc2|)` at subcarrier `m`.
pub fn mismatch_bound(phase: &PhaseFunction, m: usize, epsilon: f64) -> MismatchBound {
    axis_bound(phase.df_dc2(m), epsilon)
}

fn axis_bound(derivative: f64, epsilon: f64) -> MismatchBound {
    if derivative == 0.0 {
        MismatchBound {
            delta_max: f64::INFINITY,
            degenerate: true,
        }
    } else {
        MismatchBound {
            delta_max: epsilon.abs() / (2.0 * PI * derivative.abs()),
            degenerate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemBound {
    pub axis: SearchAxis,
    pub delta_max: f64,
    /// Subcarrier attaining the minimum.
    pub argmin: usize,
    /// Subcarriers `m >= 1` whose derivative vanishes.
    pub degenerate: usize,
}

/// Tightest per-subcarrier bound over `m = 0..n` along `axis`.
pub fn system_bound(phase: &PhaseFunction, axis: SearchAxis, n: usize, epsilon: f64) -> Result<SystemBound> {
    let mut best = SystemBound {
        axis,
        delta_max: f64::INFINITY,
        argmin: 0,
        degenerate: 0,
    };
    for m in 0..n {
        let b = axis_bound(phase.derivative(axis, m)?, epsilon);
        if b.degenerate && m > 0 {
            best.degenerate += 1;
        }
        if b.delta_max < best.delta_max {
            best.delta_max = b.delta_max;
            best.argmin = m;
        }
    }
    Ok(best)
}

/// Which parameters the eavesdropper has to search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchSpace {
    C2Only,
    C2AndKappa,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisCost {
    pub axis: SearchAxis,
    pub range: f64,
    pub interval: f64,
    pub count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityEstimate {
    /// Exponent of N in the search-cost order.
    pub exponent: f64,
    /// Product of per-axis candidate counts.
    pub count: f64,
    pub axes: Vec<AxisCost>,
}

/// Search-cost order and candidate count, using the analytic system bound
/// as each axis' interval. The c2 range is 1; `kappa_range` is the assumed
/// width of the kappa search interval.
pub fn complexity_estimate(
    phase: &PhaseFunction,
    n: usize,
    space: SearchSpace,
    kappa_range: f64,
    epsilon: f64,
) -> Result<ComplexityEstimate> {
    let exponent = match (phase.kind, space) {
        (PhaseKind::Conventional, SearchSpace::C2Only) => 2.0,
        (PhaseKind::Conventional, SearchSpace::C2AndKappa) => {
            return Err(Error::Unsupported(
                "the conventional law has no independent kappa axis".into(),
            ))
        }
        (PhaseKind::CosineFamily, SearchSpace::C2Only) => phase.a + phase.b,
        (PhaseKind::CosineFamily, SearchSpace::C2AndKappa) => 2.0 * phase.a + phase.b,
    };
    let mut axes = vec![(SearchAxis::C2, 1.0)];
    if space == SearchSpace::C2AndKappa {
        axes.push((SearchAxis::Kappa, kappa_range));
    }
    let axes = axes
        .into_iter()
        .map(|(axis, range)| {
            let interval = system_bound(phase, axis, n, epsilon)?.delta_max;
            Ok(AxisCost {
                axis,
                range,
                interval,
                count: range / interval,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComplexityEstimate {
        exponent,
        count: axes.iter().map(|a| a.count).product(),
        axes,
    })
}

/// Analytic tables printed by the CLI without running any simulation.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub phase: PhaseFunction,
    pub n: usize,
    pub epsilon: f64,
    pub per_subcarrier: Vec<(usize, MismatchBound)>,
    pub system: SystemBound,
    pub c2_only: ComplexityEstimate,
    pub joint: Option<ComplexityEstimate>,
}

/// Subcarriers listed in the per-m table: powers of two and the last one.
fn report_rows(n: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = std::iter::successors(Some(1usize), |m| m.checked_mul(2))
        .take_while(|&m| m < n)
        .collect();
    if n > 1 && rows.last() != Some(&(n - 1)) {
        rows.push(n - 1);
    }
    rows
}

pub fn bound_report(phase: &PhaseFunction, n: usize, epsilon: f64, kappa_range: f64) -> Result<BoundReport> {
    phase.validate()?;
    let joint = match phase.kind {
        PhaseKind::CosineFamily => Some(complexity_estimate(phase, n, SearchSpace::C2AndKappa, kappa_range, epsilon)?),
        PhaseKind::Conventional => None,
    };
    Ok(BoundReport {
        phase: *phase,
        n,
        epsilon,
        per_subcarrier: report_rows(n).into_iter().map(|m| (m, mismatch_bound(phase, m, epsilon))).collect(),
        system: system_bound(phase, SearchAxis::C2, n, epsilon)?,
        c2_only: complexity_estimate(phase, n, SearchSpace::C2Only, kappa_range, epsilon)?,
        joint,
    })
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.phase;
        writeln!(
            f,
            "phase {:?} c2={} kappa={} a={} b={}  N={}  epsilon={}",
            p.kind, p.c2, p.kappa, p.a, p.b, self.n, self.epsilon
        )?;
        writeln!(f, "{:>6}  {:>14}  {:>12}", "m", "df/dc2", "delta_max")?;
        for (m, b) in &self.per_subcarrier {
            let bound = if b.degenerate {
                "degenerate".to_string()
            } else {
                format!("{:.4e}", b.delta_max)
            };
            writeln!(f, "{:>6}  {:>14.6e}  {:>12}", m, p.df_dc2(*m), bound)?;
        }
        writeln!(
            f,
            "system bound: {:.4e} at m={} ({} degenerate subcarriers)",
            self.system.delta_max, self.system.argmin, self.system.degenerate
        )?;
        let line = |f: &mut fmt::Formatter<'_>, label: &str, c: &ComplexityEstimate| {
            writeln!(f, "{label}: O(N^{}), about {:.3e} candidates", c.exponent, c.count)
        };
        line(f, "c2 search", &self.c2_only)?;
        if let Some(joint) = &self.joint {
            line(f, "c2 and kappa search", joint)?;
        }
        Ok(())
    }
}

/// Monte Carlo setup for measuring a mismatch interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchSweepSpec {
    pub axis: SearchAxis,
    /// Positive, strictly increasing offsets.
    pub delta_grid: Vec<f64>,
    pub snr_db: f64,
    pub trials: u64,
    /// Phase-error tolerance in radians used for the analytic comparison.
    pub epsilon: f64,
    pub threshold: f64,
}

impl MismatchSweepSpec {
    pub fn new(axis: SearchAxis, delta_grid: Vec<f64>) -> Self {
        MismatchSweepSpec {
            axis,
            delta_grid,
            snr_db: 25.0,
            trials: 10_000,
            epsilon: 0.1,
            threshold: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_grid(&self.delta_grid)?;
        if self.delta_grid[0] <= 0.0 {
            return Err(Error::config("mismatch offsets must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 0.5) {
            return Err(Error::config("BER threshold must lie in (0, 0.5)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingStatus {
    /// Interpolated between two grid points.
    Interpolated,
    /// Already above threshold at the first grid point; the estimate is an
    /// upper bound.
    BelowGrid,
    /// Never above threshold; the estimate is a lower bound.
    NotReached,
}

impl CrossingStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CrossingStatus::Interpolated => "interpolated",
            CrossingStatus::BelowGrid => "below-grid",
            CrossingStatus::NotReached => "not-reached",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub delta_star: f64,
    pub status: CrossingStatus,
    /// Grid points bracketing the crossing.
    pub bracket: Option<(f64, f64)>,
}

/// First offset where the BER exceeds `threshold`.
///
/// The curve is replaced by its running maximum so that Monte Carlo dips do
/// not create spurious crossings. The crossing is interpolated linearly in
/// log-log coordinates, or in BER against log offset when the lower point
/// saw no errors. Non-positive offsets are ignored.
pub fn estimate_crossing(deltas: &[f64], bers: &[f64], threshold: f64) -> Result<Crossing> {
    if deltas.len() != bers.len() {
        return Err(Error::shape("offset and BER lists differ in length"));
    }
    let points: Vec<(f64, f64)> = deltas
        .iter()
        .zip(bers)
        .filter(|(d, _)| **d > 0.0)
        .map(|(&d, &b)| (d, b))
        .collect();
    let Some(&(first, _)) = points.first() else {
        return Err(Error::config("no positive offsets to locate a crossing"));
    };
    let mut envelope = 0.0f64;
    let mut prev: (f64, f64) = (first, 0.0);
    for (i, &(d, b)) in points.iter().enumerate() {
        envelope = envelope.max(b);
        if envelope > threshold {
            if i == 0 {
                return Ok(Crossing {
                    delta_star: d,
                    status: CrossingStatus::BelowGrid,
                    bracket: None,
                });
            }
            let (d0, b0) = prev;
            let t = if b0 > 0.0 {
                (threshold.ln() - b0.ln()) / (envelope.ln() - b0.ln())
            } else {
                threshold / envelope
            };
            return Ok(Crossing {
                delta_star: (d0.ln() + t * (d.ln() - d0.ln())).exp(),
                status: CrossingStatus::Interpolated,
                bracket: Some((d0, d)),
            });
        }
        prev = (d, envelope);
    }
    Ok(Crossing {
        delta_star: prev.0,
        status: CrossingStatus::NotReached,
        bracket: None,
    })
}

#[derive(Debug, Clone)]
pub struct MismatchInterval {
    pub crossing: Crossing,
    pub threshold: f64,
    pub curve: Vec<BerPoint>,
}

impl MismatchInterval {
    pub fn delta_star(&self) -> f64 {
        self.crossing.delta_star
    }
}

/// Eavesdropper BER over `spec.delta_grid` and the offset where it crosses
/// the threshold. SNR and trial count come from `spec`.
pub fn measure_mismatch_interval(scenario: &SimScenario, spec: &MismatchSweepSpec) -> Result<MismatchInterval> {
    spec.validate()?;
    let scenario = scenario.with_snr(spec.snr_db).with_trials(spec.trials);
    let curve = Link::new(&scenario)?.mismatch_curve(spec.axis, &spec.delta_grid)?;
    let bers: Vec<f64> = curve.iter().map(|p| p.ber).collect();
    Ok(MismatchInterval {
        crossing: estimate_crossing(&spec.delta_grid, &bers, spec.threshold)?,
        threshold: spec.threshold,
        curve,
    })
}

/// One searched parameter and its candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisGrid {
    pub axis: SearchAxis,
    pub values: Vec<f64>,
}

impl AxisGrid {
    /// `count` evenly spaced values `start, start + step, ...`.
    pub fn stepped(axis: SearchAxis, start: f64, step: f64, count: usize) -> Self {
        AxisGrid {
            axis,
            values: (0..count).map(|i| start + step * i as f64).collect(),
        }
    }
}

/// What the eavesdropper knows: the channel and the pilot bits of the
/// intercepted frames (both implied by the scenario and `frames`), and c1.
/// The phase parameters on `axes` are unknown and searched over.
#[derive(Debug, Clone, PartialEq)]
pub struct EveModel {
    pub axes: Vec<AxisGrid>,
    /// Trial indices of the intercepted pilot frames.
    pub frames: Vec<u64>,
    pub success_ber_threshold: f64,
}

impl EveModel {
    pub fn new(axes: Vec<AxisGrid>) -> Self {
        EveModel {
            axes,
            frames: vec![0],
            success_ber_threshold: 1e-3,
        }
    }

    pub fn candidates(&self) -> u64 {
        self.axes.iter().map(|a| a.values.len() as u64).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::config("the search needs at least one axis"));
        }
        if self.frames.is_empty() {
            return Err(Error::config("the search needs at least one pilot frame"));
        }
        for (i, grid) in self.axes.iter().enumerate() {
            if self.axes[..i].iter().any(|g| g.axis == grid.axis) {
                return Err(Error::config(format!("axis {:?} listed twice", grid.axis)));
            }
            check_grid(&grid.values)?;
            let (lo, hi) = (grid.values[0], grid.values[grid.values.len() - 1]);
            if grid.axis == SearchAxis::C2 && (lo <= 0.0 || hi > 1.0) {
                return Err(Error::config("c2 candidates must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: PhaseFunction,
    pub best_ber: f64,
    pub candidates: u64,
    pub success: bool,
    pub elapsed: Duration,
}

impl SearchResult {
    pub fn per_candidate(&self) -> Duration {
        self.elapsed.div_f64(self.candidates.max(1) as f64)
    }
}

/// Exhaustive grid search over the unknown phase parameters. Each candidate
/// is scored by its BER on the known pilot frames; ties keep the earliest
/// candidate in row-major grid order.
pub fn brute_force_search(eve: &EveModel, scenario: &SimScenario) -> Result<SearchResult> {
    eve.validate()?;
    let start = Instant::now();
    let link = Link::new(scenario)?;
    let n = link.modem().n();
    let mut frames = Vec::with_capacity(eve.frames.len());
    for &trial in &eve.frames {
        let (bits, z) = link.equalized_time(trial)?;
        frames.push((bits, link.modem().demodulate_chirp_only(&z)?));
    }
    let pilot_bits = link.bits_per_frame() * frames.len() as u64;

    let true_phase = scenario.afdm.phase;
    let mut best: Option<(u64, PhaseFunction)> = None;
    let mut index = vec![0usize; eve.axes.len()];
    let mut evaluated = 0u64;
    let mut rotation = vec![C64::new(0.0, 0.0); n];
    loop {
        let candidate = eve
            .axes
            .iter()
            .zip(&index)
            .fold(true_phase, |p, (grid, &i)| p.set_param(grid.axis, grid.values[i]));
        for (k, r) in rotation.iter_mut().enumerate() {
            *r = cis_cycles(-candidate.eval_mod1(k));
        }
        let errors: u64 = frames
            .iter()
            .map(|(bits, u)| {
                let symbols = u.iter().zip(&rotation).map(|(a, r)| a * r);
                link.constellation().errors_of(symbols, bits)
            })
            .sum();
        evaluated += 1;
        if best.as_ref().is_none_or(|(e, _)| errors < *e) {
            best = Some((errors, candidate));
        }
        // Odometer increment, last axis fastest.
        let mut axis = eve.axes.len();
        loop {
            if axis == 0 {
                let (errors, best) = best.expect("at least one candidate");
                let best_ber = errors as f64 / pilot_bits as f64;
                return Ok(SearchResult {
                    best,
                    best_ber,
                    candidates: evaluated,
                    success: best_ber <= eve.success_ber_threshold,
                    elapsed: start.elapsed(),
                });
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < eve.axes[axis].values.len() {
                break;
            }
            index[axis] = 0;
        }
    }
}
