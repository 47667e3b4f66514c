//! Gray-labelled square QAM constellations with hard-decision demapping.
//!
//! QPSK uses the labeling `(b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2)`:
//! the first bit of each tuple selects the sign of the in-phase component and
//! the second the sign of the quadrature component. Larger square QAM orders
//! follow the same layout, with the first half of the label on the real axis.

use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Modulation names accepted in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Modulation {
    #[default]
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn spec(self) -> ConstellationSpec {
        match self {
            Modulation::Qpsk => ConstellationSpec::qpsk(),
            Modulation::Qam16 => ConstellationSpec::square_qam(16)
                .expect("16 is a valid square QAM order"),
        }
    }
}

/// A unit-average-energy constellation. `points[label]` is the point carrying
/// the bit tuple whose big-endian value is `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationSpec {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<C64>,
}

impl ConstellationSpec {
    pub fn qpsk() -> Self {
        Self::square_qam(4).expect("4 is a valid square QAM order")
    }

    /// Square QAM of the given order (4, 16, 64, ...) with per-axis Gray
    /// labeling.
    pub fn square_qam(order: usize) -> Result<Self> {
        let bits_per_symbol = order.trailing_zeros() as usize;
        if order < 4 || !order.is_power_of_two() || !bits_per_symbol.is_multiple_of(2) {
            return Err(Error::config(format!(
                "square QAM needs an even power of two >= 4, got {order}"
            )));
        }
        let axis_bits = bits_per_symbol / 2;
        let levels = 1usize << axis_bits;
        // Gray-coded axis label -> amplitude. Label g sits at position
        // gray_decode(g), counted from the positive end.
        let amplitude = |g: usize| {
            let mut idx = g;
            let mut shift = g >> 1;
            while shift != 0 {
                idx ^= shift;
                shift >>= 1;
            }
            (levels as f64 - 1.0) - 2.0 * idx as f64
        };
        let mask = levels - 1;
        let raw: Vec<C64> = (0..order)
            .map(|label| C64::new(amplitude(label >> axis_bits), amplitude(label & mask)))
            .collect();
        let energy = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        let scale = energy.sqrt().recip();
        Ok(Self {
            order,
            bits_per_symbol,
            points: raw.into_iter().map(|p| p * scale).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    fn label_of(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b & 1))
    }

    /// Maps consecutive bit tuples onto constellation points.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<C64>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::shape(format!(
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks_exact(self.bits_per_symbol)
            .map(|tuple| self.points[self.label_of(tuple)])
            .collect())
    }

    /// Index of the nearest point; ties go to the lowest label.
    pub fn nearest_label(&self, symbol: C64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (label, p) in self.points.iter().enumerate() {
            let d = (symbol - p).norm_sqr();
            if d < best_dist {
                best = label;
                best_dist = d;
            }
        }
        best
    }

    pub fn demap_hard(&self, symbols: &[C64]) -> Vec<u8> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for &s in symbols {
            let label = self.nearest_label(s);
            for k in (0..self.bits_per_symbol).rev() {
                bits.push(((label >> k) & 1) as u8);
            }
        }
        bits
    }

    /// Bit errors of hard decisions on `symbols` against `tx_bits`, without
    /// materializing the demapped bits.
    pub fn count_symbol_errors(&self, symbols: &[C64], tx_bits: &[u8]) -> Result<u64> {
        if symbols.len() * self.bits_per_symbol != tx_bits.len() {
            return Err(Error::shape(format!(
                "{} symbols do not match {} reference bits",
                symbols.len(),
                tx_bits.len()
            )));
        }
        Ok(self.errors_of(symbols.iter().copied(), tx_bits))
    }

    /// Unchecked core of [`Self::count_symbol_errors`]; extra symbols or bits
    /// beyond the shorter input are ignored.
    pub(crate) fn errors_of<I: IntoIterator<Item = C64>>(&self, symbols: I, tx_bits: &[u8]) -> u64 {
        symbols
            .into_iter()
            .zip(tx_bits.chunks_exact(self.bits_per_symbol))
            .map(|(s, tuple)| (self.nearest_label(s) ^ self.label_of(tuple)).count_ones() as u64)
            .sum()
    }
}

/// Hamming distance between two bit sequences.
pub fn count_bit_errors(tx_bits: &[u8], rx_bits: &[u8]) -> Result<u64> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::shape(format!(
            "bit sequences differ in length: {} vs {}",
            tx_bits.len(),
            rx_bits.len()
        )));
    }
    Ok(tx_bits
        .iter()
        .zip(rx_bits)
        .filter(|(a, b)| (*a & 1) != (*b & 1))
        .count() as u64)
}
