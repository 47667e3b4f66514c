//! Doubly dispersive (linear time-varying) multipath channel.
//!
//! After prefix removal the channel acts on one block as
//! `H = sum_p h_p Gamma_p Pi^{l_p} Delta^{nu_p}`, with `Pi` the forward cyclic
//! shift, `Delta^nu = diag(e^{-j2pi nu n / N})` (fractional `nu` allowed) and
//! `Gamma_p` the prefix phase correction, `e^{-j2pi c1 (N^2 - 2N(l_p - n))}`
//! on the first `l_p` rows.
//!
//! [`propagate_time_domain`] is an independent tapped-delay-line model of the
//! same channel acting on the prefixed block.

use crate::modem::AfdmParams;
use crate::phasefn::cis_cycles;
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientModel {
    /// `h_p = sqrt(rho_p) e^{j theta_p}`, `theta_p` uniform.
    #[default]
    FixedMagnitudeRandomPhase,
    /// `h_p ~ CN(0, rho_p)`.
    ComplexGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub powers: Vec<f64>,
    pub delays: Vec<usize>,
    /// Doppler shifts normalized to the subcarrier spacing.
    pub dopplers: Vec<f64>,
    pub nu_max: f64,
    #[serde(default)]
    pub model: CoefficientModel,
}

impl ChannelProfile {
    /// Four-tap LTV profile: powers `[0.1941, 0.4056, 0.2388, 0.1615]`, delays
    /// `0..4`, Dopplers `[0, -0.3, 0.8, 3]`, `nu_max = 3`.
    pub fn four_tap_ltv() -> Self {
        ChannelProfile {
            powers: vec![0.1941, 0.4056, 0.2388, 0.1615],
            delays: vec![0, 1, 2, 3],
            dopplers: vec![0.0, -0.3, 0.8, 3.0],
            nu_max: 3.0,
            model: CoefficientModel::FixedMagnitudeRandomPhase,
        }
    }

    /// Single static path with unit gain.
    pub fn identity() -> Self {
        ChannelProfile {
            powers: vec![1.0],
            delays: vec![0],
            dopplers: vec![0.0],
            nu_max: 0.0,
            model: CoefficientModel::FixedMagnitudeRandomPhase,
        }
    }

    pub fn paths(&self) -> usize {
        self.powers.len()
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.powers.len();
        if p == 0 {
            return Err(Error::config("channel profile has no paths"));
        }
        if self.delays.len() != p || self.dopplers.len() != p {
            return Err(Error::config(format!(
                "channel profile lengths differ: {} powers, {} delays, {} dopplers",
                p,
                self.delays.len(),
                self.dopplers.len()
            )));
        }
        if self.powers.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return Err(Error::config("tap powers must be finite and non-negative"));
        }
        let total: f64 = self.powers.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("tap powers sum to {total}, expected 1")));
        }
        if self.delays.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("tap delays must be strictly increasing"));
        }
        if !(self.nu_max.is_finite() && self.nu_max >= 0.0) {
            return Err(Error::config("nu_max must be finite and non-negative"));
        }
        if let Some(nu) = self.dopplers.iter().find(|nu| !(nu.abs() <= self.nu_max)) {
            return Err(Error::config(format!(
                "Doppler {nu} exceeds nu_max = {}",
                self.nu_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub h: C64,
    pub delay: usize,
    pub doppler: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub taps: Vec<Tap>,
}

impl ChannelRealization {
    /// Sum of tap magnitudes, an upper bound on the operator norm of `H`.
    pub fn gain_bound(&self) -> f64 {
        self.taps.iter().map(|t| t.h.norm()).sum()
    }
}

pub fn draw_realization<R: Rng + ?Sized>(profile: &ChannelProfile, rng: &mut R) -> ChannelRealization {
    let taps = profile
        .powers
        .iter()
        .zip(&profile.delays)
        .zip(&profile.dopplers)
        .map(|((&rho, &delay), &doppler)| {
            let h = match profile.model {
                CoefficientModel::FixedMagnitudeRandomPhase => {
                    let theta: f64 = rng.random();
                    cis_cycles(theta) * rho.sqrt()
                }
                CoefficientModel::ComplexGaussian => {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    C64::new(re, im) * (rho / 2.0).sqrt()
                }
            };
            Tap { h, delay, doppler }
        })
        .collect();
    ChannelRealization { taps }
}

fn check_delays(real: &ChannelRealization, params: &AfdmParams) -> Result<()> {
    if let Some(t) = real.taps.iter().find(|t| t.delay > params.cpp_len) {
        return Err(Error::config(format!(
            "path delay {} exceeds prefix length {}",
            t.delay, params.cpp_len
        )));
    }
    Ok(())
}

/// Prefix phase correction `Gamma_p[row]` for a path of delay `l`.
fn cpp_gamma(params: &AfdmParams, l: usize, row: usize) -> C64 {
    if row < l {
        let n = params.n as f64;
        let k = n * n - 2.0 * n * (l - row) as f64;
        cis_cycles(-(params.c1 * k).rem_euclid(1.0))
    } else {
        C64::new(1.0, 0.0)
    }
}

/// `e^{-j2pi nu n / N}`.
fn doppler_phase(nu: f64, n: usize, len: usize) -> C64 {
    cis_cycles(-(nu * n as f64 / len as f64).rem_euclid(1.0))
}

/// Dense `H`, built as the sum of explicit matrix products.
pub fn build_channel_matrix(real: &ChannelRealization, params: &AfdmParams) -> Result<DMatrix<C64>> {
    check_delays(real, params)?;
    let n = params.n;
    let mut h = DMatrix::zeros(n, n);
    for tap in &real.taps {
        let gamma = DMatrix::from_diagonal(
            &(0..n).map(|row| cpp_gamma(params, tap.delay, row)).collect::<Vec<_>>().into(),
        );
        let shift = DMatrix::from_fn(n, n, |row, col| {
            if col == (row + n - tap.delay % n) % n {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let doppler = DMatrix::from_diagonal(
            &(0..n).map(|k| doppler_phase(tap.doppler, k, n)).collect::<Vec<_>>().into(),
        );
        h += gamma * shift * doppler * tap.h;
    }
    Ok(h)
}

/// Row-sparse form of `H`: each row holds one entry per path.
#[derive(Debug, Clone)]
pub struct SparseChannel {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseChannel {
    pub fn new(real: &ChannelRealization, params: &AfdmParams) -> Result<Self> {
        check_delays(real, params)?;
        let n = params.n;
        let rows = (0..n)
            .map(|row| {
                real.taps
                    .iter()
                    .map(|tap| {
                        let col = (row + n - tap.delay % n) % n;
                        let v = tap.h * cpp_gamma(params, tap.delay, row) * doppler_phase(tap.doppler, col, n);
                        (col, v)
                    })
                    .collect()
            })
            .collect();
        Ok(SparseChannel { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn apply(&self, s: &[C64]) -> Vec<C64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, v)| v * s[c]).sum())
            .collect()
    }

    /// `H^H r`.
    pub fn adjoint_apply(&self, r: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for (row, &rv) in self.rows.iter().zip(r) {
            for &(c, v) in row {
                out[c] += v.conj() * rv;
            }
        }
        out
    }

    /// `H^H H + sigma2 I`.
    pub fn regularized_gram(&self, sigma2: f64) -> DMatrix<C64> {
        let mut g = DMatrix::from_diagonal_element(self.n, self.n, C64::new(sigma2, 0.0));
        for row in &self.rows {
            for &(i, vi) in row {
                let ci = vi.conj();
                for &(j, vj) in row {
                    g[(i, j)] += ci * vj;
                }
            }
        }
        g
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                h[(r, c)] += v;
            }
        }
        h
    }
}

/// Per-sample noise variance for a unit-energy signal: `10^{-snr/10}`.
/// Infinite SNR gives zero.
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// Adds circularly symmetric Gaussian noise of variance `sigma2` in place.
pub fn add_awgn<R: Rng + ?Sized>(r: &mut [C64], sigma2: f64, rng: &mut R) {
    if sigma2 == 0.0 {
        return;
    }
    let scale = (sigma2 / 2.0).sqrt();
    for v in r.iter_mut() {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *v += C64::new(re, im) * scale;
    }
}

/// `r = H s + w`.
pub fn apply_channel<R: Rng + ?Sized>(
    h: &DMatrix<C64>,
    s: &[C64],
    snr_db: f64,
    rng: &mut R,
) -> Result<Vec<C64>> {
    if h.ncols() != s.len() {
        return Err(Error::shape(format!(
            "channel is {}x{}, signal has {} samples",
            h.nrows(),
            h.ncols(),
            s.len()
        )));
    }
    let mut r: Vec<C64> = (0..h.nrows())
        .map(|row| h.row(row).iter().zip(s).map(|(a, b)| a * b).sum())
        .collect();
    add_awgn(&mut r, noise_variance(snr_db), rng);
    Ok(r)
}

/// Tapped delay line over the prefixed block:
/// `out[i] = sum_p h_p e^{-j2pi nu_p t / N} s_cpp[i - l_p]`.
///
/// The Doppler phase of a path is referenced to the position `t` of the
/// source sample inside the block, taken modulo N, so a prefix sample carries
/// the Doppler phase of the body sample it copies and block sample 0 carries
/// phase 0. For integer Doppler this is the same as using the unwrapped
/// position. Inputs before the start of `s_cpp` are zero.
pub fn propagate_time_domain(
    real: &ChannelRealization,
    s_cpp: &[C64],
    params: &AfdmParams,
) -> Result<Vec<C64>> {
    let n = params.n as i64;
    let l = params.cpp_len as i64;
    if s_cpp.len() as i64 != n + l {
        return Err(Error::shape(format!(
            "expected {} prefixed samples, got {}",
            n + l,
            s_cpp.len()
        )));
    }
    let mut out = vec![C64::new(0.0, 0.0); s_cpp.len()];
    for (i, o) in out.iter_mut().enumerate() {
        for tap in &real.taps {
            let src = i as i64 - tap.delay as i64;
            if src < 0 {
                continue;
            }
            let t = (src - l).rem_euclid(n);
            let doppler = cis_cycles(-(tap.doppler * t as f64 / n as f64).rem_euclid(1.0));
            *o += tap.h * doppler * s_cpp[src as usize];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::Modem;
    use crate::phasefn::PhaseFunction;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(n: usize, c1: f64, cpp: usize) -> AfdmParams {
        AfdmParams::with_c1(n, c1, PhaseFunction::conventional(0.2), cpp).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn single(h: C64, delay: usize, doppler: f64) -> ChannelRealization {
        ChannelRealization {
            taps: vec![Tap { h, delay, doppler }],
        }
    }

    fn matvec(h: &DMatrix<C64>, s: &[C64]) -> Vec<C64> {
        (h * DVector::from_column_slice(s)).as_slice().to_vec()
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn profile_validation() {
        assert!(ChannelProfile::four_tap_ltv().validate().is_ok());
        let mut p = ChannelProfile::four_tap_ltv();
        p.powers[0] = 0.3;
        assert!(p.validate().is_err());
        let mut p = ChannelProfile::four_tap_ltv();
        p.delays = vec![0, 2, 2, 3];
        assert!(p.validate().is_err());
        let mut p = ChannelProfile::four_tap_ltv();
        p.dopplers[3] = 3.5;
        assert!(p.validate().is_err());
        let mut p = ChannelProfile::four_tap_ltv();
        p.dopplers.pop();
        assert!(p.validate().is_err());
    }

    #[test]
    fn fixed_magnitude_draws() {
        let profile = ChannelProfile::four_tap_ltv();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r = draw_realization(&profile, &mut rng);
            assert_eq!(r.taps.len(), 4);
            for (t, rho) in r.taps.iter().zip(&profile.powers) {
                assert!((t.h.norm() - rho.sqrt()).abs() < 1e-15);
            }
        }
        let a = draw_realization(&profile, &mut ChaCha8Rng::seed_from_u64(77));
        let b = draw_realization(&profile, &mut ChaCha8Rng::seed_from_u64(77));
        assert_eq!(a, b);
    }

    #[test]
    fn power_normalization() {
        for model in [CoefficientModel::FixedMagnitudeRandomPhase, CoefficientModel::ComplexGaussian] {
            let profile = ChannelProfile {
                model,
                ..ChannelProfile::four_tap_ltv()
            };
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let draws = 100_000;
            let total: f64 = (0..draws)
                .map(|_| {
                    draw_realization(&profile, &mut rng)
                        .taps
                        .iter()
                        .map(|t| t.h.norm_sqr())
                        .sum::<f64>()
                })
                .sum::<f64>()
                / draws as f64;
            assert!((total - 1.0).abs() < 0.01, "{model:?}: {total}");
        }
    }

    #[test]
    fn matrix_special_cases() {
        let p = params(8, 7.0 / 16.0, 2);
        let h = build_channel_matrix(&single(C64::new(1.0, 0.0), 0, 0.0), &p).unwrap();
        assert!((h - DMatrix::identity(8, 8)).map(|z| z.norm()).max() < 1e-15);
        let h = build_channel_matrix(&single(C64::new(1.0, 0.0), 0, 1.0), &p).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                let expect = if r == c { C64::from_polar(1.0, -2.0 * PI * r as f64 / 8.0) } else { C64::new(0.0, 0.0) };
                assert!((h[(r, c)] - expect).norm() < 1e-14);
            }
        }
        assert!(matches!(
            build_channel_matrix(&single(C64::new(1.0, 0.0), 3, 0.0), &p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn sparse_form_matches_dense_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = params(64, 7.0 / 128.0, 3);
        let real = draw_realization(&ChannelProfile::four_tap_ltv(), &mut rng);
        let dense = build_channel_matrix(&real, &p).unwrap();
        let sparse = SparseChannel::new(&real, &p).unwrap();
        assert!((sparse.to_dense() - &dense).map(|z| z.norm()).max() < 1e-14);
        let s = random_vec(&mut rng, 64);
        assert!(max_diff(&sparse.apply(&s), &matvec(&dense, &s)) < 1e-13);
        let adj = matvec(&dense.adjoint(), &s);
        assert!(max_diff(&sparse.adjoint_apply(&s), &adj) < 1e-13);
        let gram = dense.adjoint() * &dense + DMatrix::from_diagonal_element(64, 64, C64::new(0.25, 0.0));
        assert!((sparse.regularized_gram(0.25) - gram).map(|z| z.norm()).max() < 1e-13);
    }

    fn oracle_matches(profile: &ChannelProfile, c1: f64, trials: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = params(64, c1, profile.max_delay());
        let modem = Modem::new(&p).unwrap();
        for _ in 0..trials {
            let real = draw_realization(profile, &mut rng);
            let h = build_channel_matrix(&real, &p).unwrap();
            let s = random_vec(&mut rng, 64);
            let through = propagate_time_domain(&real, &modem.add_cpp(&s).unwrap(), &p).unwrap();
            let r = modem.remove_cpp(&through).unwrap();
            let err = max_diff(&r, &matvec(&h, &s));
            assert!(err <= 1e-9, "c1={c1}: {err}");
        }
    }

    #[test]
    fn time_domain_oracle_matches_matrix() {
        let four = ChannelProfile::four_tap_ltv();
        let integer = ChannelProfile {
            dopplers: vec![0.0, -1.0, 2.0, 3.0],
            ..four.clone()
        };
        let single_frac = ChannelProfile {
            powers: vec![1.0],
            delays: vec![2],
            dopplers: vec![0.8],
            nu_max: 1.0,
            model: CoefficientModel::FixedMagnitudeRandomPhase,
        };
        for c1 in [0.0, 7.0 / 128.0] {
            oracle_matches(&four, c1, 100, 11);
            oracle_matches(&integer, c1, 20, 12);
            oracle_matches(&single_frac, c1, 20, 13);
        }
    }

    /// With integer Doppler the wrap-around reference is irrelevant: the
    /// unwrapped tapped-delay-line formula gives the same block.
    #[test]
    fn integer_doppler_unwrapped_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let p = params(32, 5.0 / 64.0, 3);
        let modem = Modem::new(&p).unwrap();
        let real = ChannelRealization {
            taps: vec![
                Tap { h: C64::new(0.6, 0.1), delay: 1, doppler: -2.0 },
                Tap { h: C64::new(-0.2, 0.5), delay: 3, doppler: 2.0 },
            ],
        };
        let s = random_vec(&mut rng, 32);
        let s_cpp = modem.add_cpp(&s).unwrap();
        let mut direct = vec![C64::new(0.0, 0.0); s_cpp.len()];
        for (i, o) in direct.iter_mut().enumerate() {
            for t in &real.taps {
                let src = i as i64 - t.delay as i64;
                if src >= 0 {
                    let arg = -2.0 * PI * t.doppler * (i as f64 - 3.0 - t.delay as f64) / 32.0;
                    *o += t.h * C64::from_polar(1.0, arg) * s_cpp[src as usize];
                }
            }
        }
        let h = build_channel_matrix(&real, &p).unwrap();
        assert!(max_diff(&modem.remove_cpp(&direct).unwrap(), &matvec(&h, &s)) < 1e-12);
    }

    #[test]
    fn oracle_trivial_cases() {
        let p = params(16, 0.1, 2);
        let real = single(C64::new(0.3, -0.4), 0, 0.0);
        let zero = vec![C64::new(0.0, 0.0); 18];
        assert_eq!(propagate_time_domain(&real, &zero, &p).unwrap(), zero);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = random_vec(&mut rng, 18);
        let out = propagate_time_domain(&real, &s, &p).unwrap();
        let expect: Vec<C64> = s.iter().map(|v| v * C64::new(0.3, -0.4)).collect();
        assert!(max_diff(&out, &expect) < 1e-15);
        assert!(propagate_time_domain(&real, &s[1..], &p).is_err());
    }

    #[test]
    fn norm_bound_and_gamma_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = params(64, 7.0 / 128.0, 3);
        for _ in 0..50 {
            let real = draw_realization(&ChannelProfile::four_tap_ltv(), &mut rng);
            let h = build_channel_matrix(&real, &p).unwrap();
            let s = random_vec(&mut rng, 64);
            let hs: f64 = matvec(&h, &s).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let ns: f64 = s.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            assert!(hs <= real.gain_bound() * ns * (1.0 + 1e-12));
        }
        for l in 0..4 {
            for row in 0..64 {
                assert!((cpp_gamma(&p, l, row).norm() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn noise_calibration() {
        let h = DMatrix::<C64>::identity(1000, 1000);
        let s = vec![C64::new(0.0, 0.0); 1000];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let snr = 7.0;
        let mut acc = 0.0;
        for _ in 0..1000 {
            acc += apply_channel(&h, &s, snr, &mut rng).unwrap().iter().map(|v| v.norm_sqr()).sum::<f64>();
        }
        let var = acc / 1e6;
        let expect = noise_variance(snr);
        assert!((var / expect - 1.0).abs() < 0.02, "{var} vs {expect}");
    }

    #[test]
    fn noiseless_and_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = params(16, 0.15, 3);
        let real = draw_realization(&ChannelProfile::four_tap_ltv(), &mut rng);
        let h = build_channel_matrix(&real, &p).unwrap();
        let s = random_vec(&mut rng, 16);
        let r = apply_channel(&h, &s, f64::INFINITY, &mut rng).unwrap();
        assert!(max_diff(&r, &matvec(&h, &s)) < 1e-14);
        let a = apply_channel(&h, &s, 10.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = apply_channel(&h, &s, 10.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert!(apply_channel(&h, &s[1..], 10.0, &mut rng).is_err());
    }
}
