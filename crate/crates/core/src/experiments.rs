//! Monte Carlo engine and the BER campaigns built on it.
//!
//! A trial transmits one frame of random QPSK symbols over a fresh channel
//! realization with fresh noise, all drawn from streams keyed by the trial
//! index (see [`crate::rng`]). Sweeps reuse each trial for every sweep point
//! (common random numbers): the legitimate MMSE output is computed once and
//! each eavesdropper candidate is obtained from it by a diagonal rotation.

use crate::channel::{
    add_awgn, build_channel_matrix, draw_realization, noise_variance, ChannelProfile, ChannelRealization,
    SparseChannel,
};
use crate::constellation::{ConstellationSpec, Modulation};
use crate::modem::{AfdmParams, Modem};
use crate::phasefn::{PhaseFunction, SearchAxis};
use crate::receiver::{effective_channel, mmse_equalize, mmse_time_domain};
use crate::rng::{stream, Purpose};
use crate::security::{measure_mismatch_interval, mismatch_rotation, MismatchInterval, MismatchSweepSpec};
use crate::{Error, Result, C64};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Trials evaluated between early-termination checks.
const BATCH: u64 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub afdm: AfdmParams,
    pub channel: ChannelProfile,
    pub modulation: Modulation,
    pub master_seed: u64,
    pub trials: u64,
    pub snr_db: f64,
    /// Draw a new channel per trial; otherwise trial 0's realization is reused.
    pub redraw_channel: bool,
    /// Stop a sweep point after this many bit errors; 0 runs every trial.
    pub stop_after_errors: u64,
}

impl SimScenario {
    /// Four-tap LTV channel, `c1 = (2 nu_max + 1) / (2N)`, prefix length equal
    /// to the largest delay, QPSK, 25 dB, 10^4 trials, every trial counted.
    pub fn four_tap(n: usize, phase: PhaseFunction) -> Result<Self> {
        let channel = ChannelProfile::four_tap_ltv();
        let afdm = AfdmParams::new(n, channel.nu_max, phase, channel.max_delay())?;
        Ok(SimScenario {
            afdm,
            channel,
            modulation: Modulation::Qpsk,
            master_seed: 1,
            trials: 10_000,
            snr_db: 25.0,
            redraw_channel: true,
            stop_after_errors: 0,
        })
    }

    pub fn with_phase(&self, phase: PhaseFunction) -> Self {
        SimScenario {
            afdm: self.afdm.with_phase(phase),
            ..self.clone()
        }
    }

    pub fn with_snr(&self, snr_db: f64) -> Self {
        SimScenario { snr_db, ..self.clone() }
    }

    pub fn with_trials(&self, trials: u64) -> Self {
        SimScenario { trials, ..self.clone() }
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        SimScenario { master_seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::config(format!("invalid SNR {} dB", self.snr_db)));
        }
        self.afdm.validate()?;
        self.afdm.phase.validate()?;
        self.channel.validate()?;
        if self.channel.max_delay() > self.afdm.cpp_len {
            return Err(Error::config(format!(
                "largest path delay {} exceeds prefix length {}",
                self.channel.max_delay(),
                self.afdm.cpp_len
            )));
        }
        if self.channel.max_delay() >= self.afdm.n {
            return Err(Error::config("largest path delay must be below N"));
        }
        Ok(())
    }
}

/// Receiver-side parameter error applied by an eavesdropper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mismatch {
    None,
    Offset { axis: SearchAxis, delta: f64 },
}

impl Mismatch {
    pub fn c2(delta: f64) -> Self {
        Mismatch::Offset { axis: SearchAxis::C2, delta }
    }

    pub fn apply(&self, phase: PhaseFunction) -> PhaseFunction {
        match *self {
            Mismatch::None => phase,
            Mismatch::Offset { axis, delta } => phase.perturbed(axis, delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameCount {
    pub bits: u64,
    pub errors: u64,
}

/// One Monte Carlo measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerPoint {
    pub sweep_value: f64,
    pub trials: u64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
}

impl BerPoint {
    pub fn new(sweep_value: f64, trials: u64, bits: u64, errors: u64) -> Self {
        let ber = if bits == 0 { 0.0 } else { errors as f64 / bits as f64 };
        BerPoint {
            sweep_value,
            trials,
            bits,
            errors,
            ber,
        }
    }

    /// Binomial standard error of the BER estimate.
    pub fn std_err(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        (self.ber * (1.0 - self.ber) / self.bits as f64).sqrt()
    }

    /// Half-width of the normal-approximation 95% confidence interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_err()
    }

    /// `|p1 - p2| <= sigmas * sqrt(var1 + var2)`.
    pub fn agrees_with(&self, other: &BerPoint, sigmas: f64) -> bool {
        let spread = (self.std_err().powi(2) + other.std_err().powi(2)).sqrt();
        (self.ber - other.ber).abs() <= sigmas * spread
    }
}

/// Bits sent in a trial and the legitimate receiver's equalized symbols.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub bits: Vec<u8>,
    pub x_hat: Vec<C64>,
}

struct Transmission {
    bits: Vec<u8>,
    symbols_time: Vec<C64>,
    realization: ChannelRealization,
    noise_free: bool,
}

/// A validated scenario with its modem and constellation prepared.
pub struct Link {
    scenario: SimScenario,
    modem: Modem,
    constellation: ConstellationSpec,
    sigma2: f64,
    fixed_channel: Option<ChannelRealization>,
}

impl Link {
    pub fn new(scenario: &SimScenario) -> Result<Self> {
        scenario.validate()?;
        let fixed_channel = (!scenario.redraw_channel).then(|| {
            draw_realization(
                &scenario.channel,
                &mut stream(scenario.master_seed, 0, Purpose::Channel),
            )
        });
        Ok(Link {
            scenario: scenario.clone(),
            modem: Modem::new(&scenario.afdm)?,
            constellation: scenario.modulation.spec(),
            sigma2: noise_variance(scenario.snr_db),
            fixed_channel,
        })
    }

    pub fn scenario(&self) -> &SimScenario {
        &self.scenario
    }

    pub fn modem(&self) -> &Modem {
        &self.modem
    }

    pub fn constellation(&self) -> &ConstellationSpec {
        &self.constellation
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    pub fn bits_per_frame(&self) -> u64 {
        (self.modem.n() * self.constellation.bits_per_symbol()) as u64
    }

    pub fn realization(&self, trial: u64) -> ChannelRealization {
        match &self.fixed_channel {
            Some(r) => r.clone(),
            None => draw_realization(
                &self.scenario.channel,
                &mut stream(self.scenario.master_seed, trial, Purpose::Channel),
            ),
        }
    }

    fn transmission(&self, trial: u64) -> Result<Transmission> {
        let mut bit_rng = stream(self.scenario.master_seed, trial, Purpose::Bits);
        let bits: Vec<u8> = (0..self.bits_per_frame()).map(|_| u8::from(bit_rng.random::<bool>())).collect();
        let x = self.constellation.map_bits(&bits)?;
        Ok(Transmission {
            bits,
            symbols_time: self.modem.modulate(&x)?,
            realization: self.realization(trial),
            noise_free: self.sigma2 == 0.0,
        })
    }

    fn add_noise(&self, r: &mut [C64], trial: u64) {
        add_awgn(r, self.sigma2, &mut stream(self.scenario.master_seed, trial, Purpose::Noise));
    }

    /// Legitimate MMSE output for one trial, computed against the sparse
    /// time-domain channel.
    pub fn equalized(&self, trial: u64) -> Result<TrialOutcome> {
        let (bits, z) = self.equalized_time(trial)?;
        Ok(TrialOutcome {
            bits,
            x_hat: self.modem.demodulate(&z)?,
        })
    }

    /// Transmitted bits and the MMSE estimate of the time-domain frame.
    /// Needs the channel but not the phase law, so an eavesdropper who knows
    /// the channel can compute it too.
    pub fn equalized_time(&self, trial: u64) -> Result<(Vec<u8>, Vec<C64>)> {
        let tx = self.transmission(trial)?;
        let channel = SparseChannel::new(&tx.realization, self.modem.params())?;
        let mut r = channel.apply(&tx.symbols_time);
        if !tx.noise_free {
            self.add_noise(&mut r, trial);
        }
        Ok((tx.bits, mmse_time_domain(&channel, &r, self.sigma2)?))
    }

    /// One frame through the full receiver chain: dense channel matrix, DAFT
    /// with the (possibly mismatched) phase law, affine-domain effective
    /// channel and MMSE, hard decisions.
    pub fn run_frame(&self, mismatch: Mismatch, trial: u64) -> Result<FrameCount> {
        let tx = self.transmission(trial)?;
        let params = self.modem.params();
        // The matrix already contains the prefix insertion and removal.
        let h = build_channel_matrix(&tx.realization, params)?;
        let mut r: Vec<C64> = (0..params.n)
            .map(|row| h.row(row).iter().zip(&tx.symbols_time).map(|(a, b)| a * b).sum())
            .collect();
        if !tx.noise_free {
            self.add_noise(&mut r, trial);
        }
        let rx_modem = match mismatch {
            Mismatch::None => self.modem.clone(),
            m => Modem::new(&params.with_phase(m.apply(params.phase)))?,
        };
        let y = rx_modem.demodulate(&r)?;
        let eff = effective_channel(&h, &rx_modem, self.sigma2)?;
        let x_hat = mmse_equalize(&y, &eff)?;
        Ok(FrameCount {
            bits: tx.bits.len() as u64,
            errors: self.constellation.count_symbol_errors(&x_hat, &tx.bits)?,
        })
    }

    /// Runs all trials, scoring every sweep point on each trial's equalized
    /// output. A point stops accumulating once it reaches the scenario's
    /// error budget; the check happens between fixed batches so the result
    /// does not depend on scheduling.
    pub fn sweep<F>(&self, points: usize, score: F) -> Result<Vec<(u64, u64, u64)>>
    where
        F: Fn(&TrialOutcome, &mut [u64]) + Sync,
    {
        let budget = self.scenario.stop_after_errors;
        let mut trials = vec![0u64; points];
        let mut errors = vec![0u64; points];
        let mut active = vec![true; points];
        let mut start = 0;
        while start < self.scenario.trials && active.iter().any(|&a| a) {
            let end = (start + BATCH).min(self.scenario.trials);
            let batch = (start..end)
                .into_par_iter()
                .map(|trial| {
                    let outcome = self.equalized(trial)?;
                    let mut errs = vec![0u64; points];
                    score(&outcome, &mut errs);
                    Ok(errs)
                })
                .try_reduce(
                    || vec![0u64; points],
                    |mut acc, e| {
                        acc.iter_mut().zip(e).for_each(|(a, b)| *a += b);
                        Ok(acc)
                    },
                )?;
            for i in 0..points {
                if active[i] {
                    trials[i] += end - start;
                    errors[i] += batch[i];
                    if budget > 0 && errors[i] >= budget {
                        active[i] = false;
                    }
                }
            }
            start = end;
        }
        let bits_per_frame = self.bits_per_frame();
        Ok(trials
            .into_iter()
            .zip(errors)
            .map(|(t, e)| (t, t * bits_per_frame, e))
            .collect())
    }

    /// BER of an eavesdropper offset by each of `deltas` along `axis`.
    pub fn mismatch_curve(&self, axis: SearchAxis, deltas: &[f64]) -> Result<Vec<BerPoint>> {
        let phase = self.scenario.afdm.phase;
        let n = self.modem.n();
        let rotations: Vec<Vec<C64>> = deltas
            .iter()
            .map(|&d| mismatch_rotation(&phase, &phase.perturbed(axis, d), n))
            .collect();
        let tallies = self.sweep(deltas.len(), |outcome, errs| {
            for (e, rot) in errs.iter_mut().zip(&rotations) {
                let rotated = outcome.x_hat.iter().zip(rot).map(|(x, r)| x * r);
                *e += self.constellation.errors_of(rotated, &outcome.bits);
            }
        })?;
        Ok(deltas
            .iter()
            .zip(tallies)
            .map(|(&d, (t, b, e))| BerPoint::new(d, t, b, e))
            .collect())
    }
}

pub fn run_frame(scenario: &SimScenario, mismatch: Mismatch, trial: u64) -> Result<FrameCount> {
    Link::new(scenario)?.run_frame(mismatch, trial)
}

/// BER versus eavesdropper offset along `axis`, sharing trials across the
/// grid.
pub fn run_ber_vs_mismatch(scenario: &SimScenario, axis: SearchAxis, delta_grid: &[f64]) -> Result<Vec<BerPoint>> {
    check_grid(delta_grid)?;
    Link::new(scenario)?.mismatch_curve(axis, delta_grid)
}

/// One curve per offset in `deltas`; each inner vector runs over `snr_grid`.
/// Bits, channels and unit-variance noise are shared across SNR points.
pub fn run_snr_curves(
    scenario: &SimScenario,
    snr_grid: &[f64],
    axis: SearchAxis,
    deltas: &[f64],
) -> Result<Vec<Vec<BerPoint>>> {
    let mut curves = vec![Vec::with_capacity(snr_grid.len()); deltas.len()];
    for &snr in snr_grid {
        let points = Link::new(&scenario.with_snr(snr))?.mismatch_curve(axis, deltas)?;
        for (curve, p) in curves.iter_mut().zip(points) {
            curve.push(BerPoint { sweep_value: snr, ..p });
        }
    }
    Ok(curves)
}

/// BER versus SNR for an eavesdropper offset by `delta` in c2 (0 for the
/// legitimate receiver).
pub fn run_ber_vs_snr(scenario: &SimScenario, snr_grid: &[f64], delta: f64) -> Result<Vec<BerPoint>> {
    Ok(run_snr_curves(scenario, snr_grid, SearchAxis::C2, &[delta])?.remove(0))
}

#[derive(Debug, Clone)]
pub struct C2SweepEntry {
    pub c2: f64,
    pub interval: MismatchInterval,
    /// Subcarriers `m >= 1` with `df/dc2 = 0` at this `c2`.
    pub degenerate_subcarriers: usize,
}

/// Measured mismatch interval for each transmitter `c2`, all other phase
/// parameters taken from the scenario.
pub fn run_c2_sweep(scenario: &SimScenario, c2_values: &[f64], spec: &MismatchSweepSpec) -> Result<Vec<C2SweepEntry>> {
    c2_values
        .iter()
        .map(|&c2| {
            let phase = scenario.afdm.phase.with_c2(c2);
            let interval = measure_mismatch_interval(&scenario.with_phase(phase), spec)?;
            let degenerate_subcarriers = (1..scenario.afdm.n).filter(|&m| phase.df_dc2(m) == 0.0).count();
            Ok(C2SweepEntry {
                c2,
                interval,
                degenerate_subcarriers,
            })
        })
        .collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("sweep grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("sweep grid has non-finite values"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("sweep grid must be strictly increasing"));
    }
    Ok(())
}
