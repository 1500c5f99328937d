//! Square M-QAM with a per-axis Gray labeling.

use crate::error::{Error, Result};
use crate::scalar::{Cx, Real};

/// Constellation and bit labeling.
///
/// `points[label]` is the symbol for the `Q`-bit label whose first bit is the
/// most significant. The first `Q/2` bits select the in-phase level and the
/// remaining bits the quadrature level; each axis uses the reflected Gray
/// code, so for 16-QAM the levels are `00→-3, 01→-1, 11→+1, 10→+3`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationConfig<T> {
    pub order: usize,
    pub bits_per_symbol: usize,
    pub points: Vec<Cx<T>>,
}

impl<T: Real> ModulationConfig<T> {
    /// Unit-energy square QAM of the given order (4, 16, 64, ...).
    pub fn qam(order: usize) -> Result<Self> {
        if order < 4 || !order.is_power_of_two() || order.trailing_zeros() % 2 != 0 {
            return Err(Error::InvalidConfig(format!("{order}-QAM is not a square constellation")));
        }
        let q = order.trailing_zeros() as usize;
        let axis_bits = q / 2;
        let levels = 1usize << axis_bits;
        // Average energy of the ±1, ±3, ... grid is 2(L²-1)/3.
        let norm = (2.0 * ((levels * levels) as f64 - 1.0) / 3.0).sqrt();
        let mut amp_of_gray = vec![0.0; levels];
        for i in 0..levels {
            let g = i ^ (i >> 1);
            amp_of_gray[g] = (2 * i) as f64 - (levels as f64 - 1.0);
        }
        let points = (0..order)
            .map(|label| {
                let gi = label >> axis_bits;
                let gq = label & (levels - 1);
                Cx::new(T::lit(amp_of_gray[gi] / norm), T::lit(amp_of_gray[gq] / norm))
            })
            .collect();
        Ok(Self {
            order,
            bits_per_symbol: q,
            points,
        })
    }

    pub fn qpsk() -> Self {
        Self::qam(4).expect("QPSK is square")
    }

    pub fn qam16() -> Self {
        Self::qam(16).expect("16-QAM is square")
    }

    /// Label integer for a bit pattern (first bit most significant).
    pub fn label(&self, bits: &[u8]) -> Result<usize> {
        if bits.len() != self.bits_per_symbol {
            return Err(Error::LengthMismatch {
                expected: self.bits_per_symbol,
                actual: bits.len(),
            });
        }
        bits.iter().try_fold(0usize, |acc, &b| match b {
            0 | 1 => Ok((acc << 1) | b as usize),
            _ => Err(Error::InvalidInput(format!("non-binary value {b}"))),
        })
    }

    /// Bit `i` (0 = first / most significant) of a label.
    #[inline]
    pub fn label_bit(&self, label: usize, i: usize) -> u8 {
        ((label >> (self.bits_per_symbol - 1 - i)) & 1) as u8
    }

    pub fn bits_of(&self, label: usize) -> Vec<u8> {
        (0..self.bits_per_symbol).map(|i| self.label_bit(label, i)).collect()
    }

    /// Mean symbol energy `E_s`.
    pub fn symbol_energy(&self) -> T {
        self.points.iter().map(|p| p.norm_sqr()).sum::<T>() / T::lit(self.order as f64)
    }

    /// Label of the constellation point closest to `z`.
    pub fn nearest(&self, z: Cx<T>) -> usize {
        let mut best = (0, T::infinity());
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Maps exactly `Q` bits to a constellation point.
pub fn qam_map<T: Real>(bits: &[u8], cfg: &ModulationConfig<T>) -> Result<Cx<T>> {
    Ok(cfg.points[cfg.label(bits)?])
}
