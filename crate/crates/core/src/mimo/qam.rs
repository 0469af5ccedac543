//! Square M-QAM with per-dimension Gray labelling and unit average energy.
//!
//! A symbol carries `log₂ M` bits: the first half select the in-phase level,
//! the second half the quadrature level. Level `l ∈ {0, …, √M − 1}` maps to
//! amplitude `a (2l − (√M − 1))` with `a = √(3 / (2(M − 1)))`.

use num_complex::Complex64;

use crate::error::{LatticeError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qam {
    order: usize,
    side: usize,
    bits_per_dim: usize,
    scale: f64,
}

impl Qam {
    pub fn new(order: usize) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if order < 4 || side * side != order || !side.is_power_of_two() {
            return Err(LatticeError::Domain(format!(
                "QAM order must be a power of 4 (>= 4), got {order}"
            )));
        }
        Ok(Qam {
            order,
            side,
            bits_per_dim: side.trailing_zeros() as usize,
            scale: (3.0 / (2.0 * (order as f64 - 1.0))).sqrt(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Levels per real dimension, `√M`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_dim
    }

    pub fn bits_per_dim(&self) -> usize {
        self.bits_per_dim
    }

    /// Half the spacing between adjacent amplitudes.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn amplitude(&self, level: i64) -> f64 {
        self.scale * (2 * level - (self.side as i64 - 1)) as f64
    }

    /// Nearest level to a real amplitude, clipped to the constellation.
    pub fn nearest_level(&self, amplitude: f64) -> i64 {
        let l = ((amplitude / self.scale + (self.side as f64 - 1.0)) / 2.0).round() as i64;
        l.clamp(0, self.side as i64 - 1)
    }

    fn level_bits(&self, level: i64, out: &mut Vec<u8>) {
        let gray = (level ^ (level >> 1)) as usize;
        for b in (0..self.bits_per_dim).rev() {
            out.push(((gray >> b) & 1) as u8);
        }
    }

    fn bits_level(&self, bits: &[u8]) -> i64 {
        let gray = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let mut level = gray;
        let mut shift = gray >> 1;
        while shift != 0 {
            level ^= shift;
            shift >>= 1;
        }
        level as i64
    }

    /// `(I level, Q level)` of one symbol's bits.
    pub fn bits_to_levels(&self, bits: &[u8]) -> (i64, i64) {
        debug_assert_eq!(bits.len(), self.bits_per_symbol());
        let (i, q) = bits.split_at(self.bits_per_dim);
        (self.bits_level(i), self.bits_level(q))
    }

    pub fn levels_to_bits(&self, i_level: i64, q_level: i64, out: &mut Vec<u8>) {
        self.level_bits(i_level, out);
        self.level_bits(q_level, out);
    }

    pub fn levels_to_symbol(&self, i_level: i64, q_level: i64) -> Complex64 {
        Complex64::new(self.amplitude(i_level), self.amplitude(q_level))
    }

    pub fn modulate(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let k = self.bits_per_symbol();
        if !bits.len().is_multiple_of(k) {
            return Err(LatticeError::Domain(format!(
                "bit length {} not divisible by {k}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(LatticeError::Domain("bits must be 0 or 1".into()));
        }
        Ok(bits
            .chunks(k)
            .map(|c| {
                let (i, q) = self.bits_to_levels(c);
                self.levels_to_symbol(i, q)
            })
            .collect())
    }

    /// Hard decision: nearest constellation point per dimension.
    pub fn demodulate(&self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        for s in symbols {
            self.levels_to_bits(self.nearest_level(s.re), self.nearest_level(s.im), &mut out);
        }
        out
    }

    /// All constellation points, indexed by `i_level * side + q_level`.
    pub fn constellation(&self) -> Vec<Complex64> {
        let s = self.side as i64;
        (0..s)
            .flat_map(|i| (0..s).map(move |q| (i, q)))
            .map(|(i, q)| self.levels_to_symbol(i, q))
            .collect()
    }
}
