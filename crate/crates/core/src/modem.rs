//! AFDM modulation (IDAFT) and demodulation (DAFT) with chirp-periodic prefix.
//!
//! The modulation matrix is `Q = Lc1^H F^H Lphase^H` where `Lc1 =
//! diag(e^{-j2pi c1 n^2})`, `F` is the unitary DFT and `Lphase =
//! diag(e^{-j2pi f(c2, m)})`. Demodulation applies `Q^H = Lphase F Lc1`.
//! [`Modem`] precomputes both diagonals and an FFT plan so that each
//! transform costs O(N log N); [`build_modulation_matrix`] forms `Q`
//! explicitly for testing and for effective-channel construction.

use crate::phasefn::{cis_cycles, product_mod2, Direction, PhaseFunction};
use crate::{Error, Result, C64};
use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfdmParams {
    pub n: usize,
    pub c1: f64,
    pub phase: PhaseFunction,
    pub cpp_len: usize,
}

impl AfdmParams {
    /// Parameters with `c1 = (2 nu_max + 1) / (2N)` and a prefix of
    /// `cpp_len` samples.
    pub fn new(n: usize, nu_max: f64, phase: PhaseFunction, cpp_len: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("N must be at least 1"));
        }
        Self::with_c1(n, doppler_c1(n, nu_max), phase, cpp_len)
    }

    pub fn with_c1(n: usize, c1: f64, phase: PhaseFunction, cpp_len: usize) -> Result<Self> {
        let params = AfdmParams {
            n,
            c1: c1.rem_euclid(1.0),
            phase,
            cpp_len,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("N must be at least 1"));
        }
        if self.cpp_len > self.n {
            return Err(Error::config(format!(
                "prefix length {} exceeds N = {}",
                self.cpp_len, self.n
            )));
        }
        if !self.c1.is_finite() {
            return Err(Error::config("c1 is not finite"));
        }
        Ok(())
    }

    pub fn with_phase(&self, phase: PhaseFunction) -> Self {
        AfdmParams {
            phase,
            ..self.clone()
        }
    }
}

/// `c1 = (2 nu_max + 1) / (2N)`.
pub fn doppler_c1(n: usize, nu_max: f64) -> f64 {
    (2.0 * nu_max + 1.0) / (2.0 * n as f64)
}

/// `e^{sign j 2pi c1 n^2}` for `n = 0..len`.
fn chirp_diag(c1: f64, len: usize, sign: f64) -> Vec<C64> {
    (0..len)
        .map(|n| cis_cycles(sign * product_mod2(c1, n as u64, 2).rem_euclid(1.0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftDirection {
    Forward,
    Inverse,
}

/// Unitary DFT: forward entries `e^{-j2pi pq/N} / sqrt(N)`, inverse is its
/// conjugate transpose.
pub fn unitary_dft(v: &[C64], direction: DftDirection) -> Result<Vec<C64>> {
    if v.is_empty() {
        return Err(Error::shape("DFT of an empty vector"));
    }
    let mut planner = FftPlanner::new();
    let plan = match direction {
        DftDirection::Forward => planner.plan_fft_forward(v.len()),
        DftDirection::Inverse => planner.plan_fft_inverse(v.len()),
    };
    let mut buf = v.to_vec();
    plan.process(&mut buf);
    let scale = (v.len() as f64).sqrt().recip();
    buf.iter_mut().for_each(|x| *x *= scale);
    Ok(buf)
}

/// Dense unitary DFT matrix `F_N`.
pub fn dft_matrix(n: usize) -> DMatrix<C64> {
    let scale = (n as f64).sqrt().recip();
    DMatrix::from_fn(n, n, |p, q| {
        cis_cycles(-(((p * q) % n) as f64) / n as f64) * scale
    })
}

/// Explicit `Q = Lc1^H F^H Lphase^H`, formed as a product of dense factors.
pub fn build_modulation_matrix(params: &AfdmParams) -> DMatrix<C64> {
    let n = params.n;
    let lc1_h = DMatrix::from_diagonal(&chirp_diag(params.c1, n, 1.0).into());
    let lphase_h = DMatrix::from_diagonal(&params.phase.phase_diag(n, Direction::Modulate).into());
    let f_h = dft_matrix(n).adjoint();
    lc1_h * f_h * lphase_h
}

/// One modulated block: affine-domain symbols, time samples, and the samples
/// with the prefix prepended.
#[derive(Debug, Clone, PartialEq)]
pub struct AfdmFrame {
    pub affine_symbols: Vec<C64>,
    pub time_samples: Vec<C64>,
    pub time_with_cpp: Vec<C64>,
}

/// Precomputed diagonals and FFT plans for one parameter set. Read-only after
/// construction, so a single instance can be shared between threads.
#[derive(Clone)]
pub struct Modem {
    params: AfdmParams,
    chirp_mod: Vec<C64>,
    chirp_demod: Vec<C64>,
    phase_mod: Vec<C64>,
    phase_demod: Vec<C64>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl std::fmt::Debug for Modem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Modem").field("params", &self.params).finish_non_exhaustive()
    }
}

impl Modem {
    pub fn new(params: &AfdmParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        let mut planner = FftPlanner::new();
        Ok(Modem {
            params: params.clone(),
            chirp_mod: chirp_diag(params.c1, n, 1.0),
            chirp_demod: chirp_diag(params.c1, n, -1.0),
            phase_mod: params.phase.phase_diag(n, Direction::Modulate),
            phase_demod: params.phase.phase_diag(n, Direction::Demodulate),
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            scale: (n as f64).sqrt().recip(),
        })
    }

    pub fn params(&self) -> &AfdmParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    fn check_len(&self, v: &[C64], expect: usize, what: &str) -> Result<()> {
        if v.len() != expect {
            return Err(Error::shape(format!(
                "{what}: expected {expect} samples, got {}",
                v.len()
            )));
        }
        Ok(())
    }

    /// `s = Q x`.
    pub fn modulate(&self, x: &[C64]) -> Result<Vec<C64>> {
        self.check_len(x, self.n(), "modulate")?;
        let mut buf: Vec<C64> = x.iter().zip(&self.phase_mod).map(|(a, d)| a * d).collect();
        self.ifft.process(&mut buf);
        for (v, d) in buf.iter_mut().zip(&self.chirp_mod) {
            *v *= d * self.scale;
        }
        Ok(buf)
    }

    /// `y = Q^H r`.
    pub fn demodulate(&self, r: &[C64]) -> Result<Vec<C64>> {
        let mut buf = self.demodulate_chirp_only(r)?;
        for (v, d) in buf.iter_mut().zip(&self.phase_demod) {
            *v *= d;
        }
        Ok(buf)
    }

    /// Demodulation stopped before the phase diagonal: `F Λ_c1 r`. Any
    /// phase law is then a per-subcarrier rotation of this output.
    pub fn demodulate_chirp_only(&self, r: &[C64]) -> Result<Vec<C64>> {
        self.check_len(r, self.n(), "demodulate")?;
        let mut buf: Vec<C64> = r.iter().zip(&self.chirp_demod).map(|(a, d)| a * d * self.scale).collect();
        self.fft.process(&mut buf);
        Ok(buf)
    }

    /// Prepends the chirp-periodic prefix
    /// `s[n] = s[N + n] e^{-j2pi c1 (N^2 + 2Nn)}`, `n = -L..-1`.
    pub fn add_cpp(&self, s: &[C64]) -> Result<Vec<C64>> {
        let n = self.n();
        self.check_len(s, n, "add_cpp")?;
        let l = self.params.cpp_len;
        let mut out = Vec::with_capacity(n + l);
        for idx in -(l as i64)..0 {
            let k = (n * n) as i64 + 2 * n as i64 * idx;
            let phase = (self.params.c1 * k as f64).rem_euclid(1.0);
            out.push(s[(n as i64 + idx) as usize] * cis_cycles(-phase));
        }
        out.extend_from_slice(s);
        Ok(out)
    }

    pub fn remove_cpp(&self, r_ext: &[C64]) -> Result<Vec<C64>> {
        let l = self.params.cpp_len;
        self.check_len(r_ext, self.n() + l, "remove_cpp")?;
        Ok(r_ext[l..].to_vec())
    }

    pub fn frame(&self, affine_symbols: Vec<C64>) -> Result<AfdmFrame> {
        let time_samples = self.modulate(&affine_symbols)?;
        let time_with_cpp = self.add_cpp(&time_samples)?;
        Ok(AfdmFrame {
            affine_symbols,
            time_samples,
            time_with_cpp,
        })
    }

    /// Dense `Q` for this parameter set.
    pub fn modulation_matrix(&self) -> DMatrix<C64> {
        build_modulation_matrix(&self.params)
    }
}
