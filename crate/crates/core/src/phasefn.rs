//! Chirp phase laws `f(c2, m)` and the diagonal phase matrices they induce.
//!
//! Two kinds are supported:
//!
//! * `Conventional`: `f = kappa * c2 * m^2`, the ordinary AFDM chirp
//!   (`kappa = 1` gives the textbook `c2 m^2`);
//! * `CosineFamily`: `f = kappa * m^a * cos(pi * c2 * m^b)`.
//!
//! Phases are measured in cycles. For large `b` the argument `c2 * m^b`
//! reaches 1e18 and beyond, so for integer `b` it is reduced modulo 2
//! exactly: `c2` is split into its integer mantissa and binary exponent and
//! the product with `m^b` is formed in wrapping 128-bit arithmetic, which is
//! exact modulo every power of two up to 2^128. Non-integer `b` falls back to
//! plain double precision and loses accuracy once `c2 * m^b` is large.

use crate::{Error, Result, C64};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseKind {
    Conventional,
    CosineFamily,
}

/// Which way a phase diagonal is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `e^{+j 2 pi f}`, the factor the modulator applies.
    Modulate,
    /// `e^{-j 2 pi f}`, the demodulator's conjugate.
    Demodulate,
}

/// A secret chirp parameter an eavesdropper may search over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchAxis {
    C2,
    Kappa,
}

pub const DEFAULT_KAPPA: f64 = std::f64::consts::SQRT_2 - 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PhaseRepr", into = "PhaseRepr")]
pub struct PhaseFunction {
    pub kind: PhaseKind,
    pub c2: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseRepr {
    kind: PhaseKind,
    c2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
}

impl From<PhaseRepr> for PhaseFunction {
    fn from(r: PhaseRepr) -> Self {
        let kappa = r.kappa.unwrap_or(match r.kind {
            PhaseKind::Conventional => 1.0,
            PhaseKind::CosineFamily => DEFAULT_KAPPA,
        });
        PhaseFunction {
            kind: r.kind,
            c2: r.c2,
            kappa,
            a: r.a.unwrap_or(2.0),
            b: r.b.unwrap_or(0.0),
        }
    }
}

impl From<PhaseFunction> for PhaseRepr {
    fn from(p: PhaseFunction) -> Self {
        let cosine = p.kind == PhaseKind::CosineFamily;
        PhaseRepr {
            kind: p.kind,
            c2: p.c2,
            kappa: Some(p.kappa),
            a: cosine.then_some(p.a),
            b: cosine.then_some(p.b),
        }
    }
}

impl PhaseFunction {
    /// `f = c2 m^2`.
    pub fn conventional(c2: f64) -> Self {
        Self::conventional_scaled(c2, 1.0)
    }

    /// `f = kappa c2 m^2`.
    pub fn conventional_scaled(c2: f64, kappa: f64) -> Self {
        PhaseFunction {
            kind: PhaseKind::Conventional,
            c2,
            kappa,
            a: 2.0,
            b: 0.0,
        }
    }

    /// `f = kappa m^2 cos(pi c2 m^b)`.
    pub fn cosine(c2: f64, kappa: f64, b: f64) -> Self {
        PhaseFunction {
            kind: PhaseKind::CosineFamily,
            c2,
            kappa,
            a: 2.0,
            b,
        }
    }

    pub fn with_exponent_a(mut self, a: f64) -> Self {
        self.a = a;
        self
    }

    pub fn with_c2(mut self, c2: f64) -> Self {
        self.c2 = c2;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    /// The same law with one secret parameter shifted by `delta`.
    pub fn perturbed(self, axis: SearchAxis, delta: f64) -> Self {
        match axis {
            SearchAxis::C2 => self.with_c2(self.c2 + delta),
            SearchAxis::Kappa => self.with_kappa(self.kappa + delta),
        }
    }

    pub fn param(&self, axis: SearchAxis) -> f64 {
        match axis {
            SearchAxis::C2 => self.c2,
            SearchAxis::Kappa => self.kappa,
        }
    }

    pub fn set_param(self, axis: SearchAxis, value: f64) -> Self {
        match axis {
            SearchAxis::C2 => self.with_c2(value),
            SearchAxis::Kappa => self.with_kappa(value),
        }
    }

    /// Checks the parameter constraints a configured (not candidate) phase
    /// law must satisfy.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c2", self.c2), ("kappa", self.kappa), ("a", self.a), ("b", self.b)] {
            if !v.is_finite() {
                return Err(Error::config(format!("phase parameter {name} is not finite")));
            }
        }
        if !(self.c2 > 0.0 && self.c2 <= 1.0) {
            return Err(Error::config(format!("c2 = {} is outside (0, 1]", self.c2)));
        }
        if self.b < 0.0 {
            return Err(Error::config(format!("exponent b = {} must be >= 0", self.b)));
        }
        Ok(())
    }

    /// `c2 * m^b` reduced to `[0, 2)`.
    fn cosine_arg_mod2(&self, m: usize) -> f64 {
        match integer_exponent(self.b) {
            Some(b) => product_mod2(self.c2, m as u64, b),
            None => (self.c2 * (m as f64).powf(self.b)).rem_euclid(2.0),
        }
    }

    /// `f(c2, m)` in cycles.
    pub fn eval(&self, m: usize) -> f64 {
        match self.kind {
            PhaseKind::Conventional => {
                let m = m as f64;
                self.kappa * self.c2 * m * m
            }
            PhaseKind::CosineFamily => {
                self.kappa * pow_index(m, self.a) * cos_pi(self.cosine_arg_mod2(m))
            }
        }
    }

    /// `f(c2, m)` reduced to `[0, 1)`.
    pub fn eval_mod1(&self, m: usize) -> f64 {
        match self.kind {
            PhaseKind::Conventional if self.kappa.fract() == 0.0 => {
                let frac = product_mod2(self.c2, m as u64, 2).rem_euclid(1.0);
                (self.kappa * frac).rem_euclid(1.0)
            }
            _ => self.eval(m).rem_euclid(1.0),
        }
    }

    /// Signed `df/dc2` at subcarrier `m`.
    pub fn df_dc2(&self, m: usize) -> f64 {
        match self.kind {
            PhaseKind::Conventional => {
                let m = m as f64;
                self.kappa * m * m
            }
            PhaseKind::CosineFamily => {
                -self.kappa * PI * pow_index(m, self.a + self.b) * sin_pi(self.cosine_arg_mod2(m))
            }
        }
    }

    /// Signed `df/dkappa`; only the cosine family treats kappa as a phase
    /// parameter.
    pub fn df_dkappa(&self, m: usize) -> Result<f64> {
        match self.kind {
            PhaseKind::Conventional => Err(Error::Unsupported(
                "df/dkappa is defined for the cosine family only".into(),
            )),
            PhaseKind::CosineFamily => {
                Ok(pow_index(m, self.a) * cos_pi(self.cosine_arg_mod2(m)))
            }
        }
    }

    pub fn derivative(&self, axis: SearchAxis, m: usize) -> Result<f64> {
        match axis {
            SearchAxis::C2 => Ok(self.df_dc2(m)),
            SearchAxis::Kappa => self.df_dkappa(m),
        }
    }

    /// Diagonal of the phase matrix over subcarriers `0..n`.
    pub fn phase_diag(&self, n: usize, direction: Direction) -> Vec<C64> {
        let sign = match direction {
            Direction::Modulate => 1.0,
            Direction::Demodulate => -1.0,
        };
        (0..n).map(|m| cis_cycles(sign * self.eval_mod1(m))).collect()
    }
}

fn integer_exponent(b: f64) -> Option<u32> {
    (b >= 0.0 && b.fract() == 0.0 && b <= u32::MAX as f64).then_some(b as u32)
}

/// `m^e` with exact integer powers where possible; `0^0 = 1`.
fn pow_index(m: usize, e: f64) -> f64 {
    let base = m as f64;
    if e.fract() == 0.0 && e.abs() <= i32::MAX as f64 {
        base.powi(e as i32)
    } else {
        base.powf(e)
    }
}

/// `(c * m^b) mod 2`, exact up to the final rounding for `|c| >= 2^-74`.
pub(crate) fn product_mod2(c: f64, m: u64, b: u32) -> f64 {
    if c == 0.0 || !c.is_finite() {
        return 0.0;
    }
    let (mantissa, exponent, sign) = Float::integer_decode(c);
    let power = (m as u128).wrapping_pow(b);
    let residue = if exponent >= 1 {
        0.0
    } else if exponent == 0 {
        ((mantissa as u128).wrapping_mul(power) & 1) as f64
    } else {
        let bits = (1 - exponent as i32) as u32;
        if bits <= 127 {
            let r = (mantissa as u128).wrapping_mul(power) & ((1u128 << bits) - 1);
            r as f64 * 2f64.powi(exponent as i32)
        } else {
            (c.abs() * (m as f64).powi(b as i32)).rem_euclid(2.0)
        }
    };
    let residue = if residue >= 2.0 { 0.0 } else { residue };
    if sign < 0 && residue != 0.0 {
        2.0 - residue
    } else {
        residue
    }
}

/// Splits `x` into a multiple of 1/2 and a remainder in [-1/4, 1/4].
fn half_quadrant(x: f64) -> (u8, f64) {
    let r = x.rem_euclid(2.0);
    let k = (2.0 * r).round();
    ((k as u8) % 4, r - 0.5 * k)
}

/// `sin(pi x)`, exactly zero at integers.
pub fn sin_pi(x: f64) -> f64 {
    let (q, t) = half_quadrant(x);
    let t = PI * t;
    match q {
        0 => t.sin(),
        1 => t.cos(),
        2 => -t.sin(),
        _ => -t.cos(),
    }
}

/// `cos(pi x)`, exactly zero at half-integers.
pub fn cos_pi(x: f64) -> f64 {
    let (q, t) = half_quadrant(x);
    let t = PI * t;
    match q {
        0 => t.cos(),
        1 => -t.sin(),
        2 => -t.cos(),
        _ => t.sin(),
    }
}

/// `e^{j 2 pi x}` for `x` in cycles.
pub fn cis_cycles(x: f64) -> C64 {
    C64::new(cos_pi(2.0 * x), sin_pi(2.0 * x))
}
