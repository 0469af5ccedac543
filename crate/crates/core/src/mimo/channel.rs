//! Complex flat-fading channel and its integer-lattice embedding.
//!
//! `c = Hx + w` becomes the real system `c_r = B_r x_r + w_r` with
//! `B_r = [[Re H, −Im H], [Im H, Re H]]`, `x_r = [Re x; Im x]`. Writing each
//! real amplitude as `a (2z − (√M − 1))` for an integer level `z` turns the
//! constellation into a box of consecutive integers:
//! `‖B_r x_r − c_r‖ = ‖(2a B_r) z − (c_r + a(√M − 1) B_r 1)‖`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LatticeError, Result};
use crate::lattice::Basis;
use crate::mimo::qam::Qam;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannel {
    pub h: DMatrix<Complex64>,
    pub b_real: DMatrix<f64>,
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn real_embedding(h: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (r, c) = h.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let v = h[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
        }
    })
}

pub fn real_vector(v: &[Complex64]) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

impl ComplexChannel {
    pub fn new(h: DMatrix<Complex64>) -> Self {
        let b_real = real_embedding(&h);
        ComplexChannel { h, b_real }
    }

    /// `n × n` channel with i.i.d. CN(0, 1) entries.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self::new(DMatrix::from_fn(n, n, |_, _| complex_normal(rng)))
    }

    pub fn n(&self) -> usize {
        self.h.ncols()
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (&self.h * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect()
    }
}

/// Lattice form of one received vector: `levels ↦ ‖B z − c‖` equals the
/// complex residual norm of the corresponding symbols.
#[derive(Debug, Clone)]
pub struct EmbeddedSystem {
    pub basis: Basis,
    pub c: DVector<f64>,
    pub qam: Qam,
}

pub fn embed_real(
    channel: &ComplexChannel,
    received: &[Complex64],
    qam: Qam,
) -> Result<EmbeddedSystem> {
    if received.len() != channel.h.nrows() {
        return Err(LatticeError::Dimension {
            expected: channel.h.nrows(),
            got: received.len(),
        });
    }
    let a = qam.scale();
    let shift = a * (qam.side() as f64 - 1.0);
    let b = &channel.b_real;
    let ones = DVector::from_element(b.ncols(), 1.0);
    let c = real_vector(received) + b * ones * shift;
    let basis = Basis::new(b * (2.0 * a))?;
    Ok(EmbeddedSystem { basis, c, qam })
}

impl EmbeddedSystem {
    pub fn n_complex(&self) -> usize {
        self.basis.dim() / 2
    }

    /// Integer levels `[I levels; Q levels]` of a symbol vector on the grid.
    pub fn symbols_to_levels(&self, symbols: &[Complex64]) -> Vec<i64> {
        let i = symbols.iter().map(|s| self.qam.nearest_level(s.re));
        let q = symbols.iter().map(|s| self.qam.nearest_level(s.im));
        i.chain(q).collect()
    }

    pub fn levels_to_symbols(&self, z: &[i64]) -> Vec<Complex64> {
        let n = self.n_complex();
        (0..n)
            .map(|j| self.qam.levels_to_symbol(z[j], z[n + j]))
            .collect()
    }

    /// Clips an unconstrained integer vector onto the constellation box.
    pub fn clip(&self, z: &[i64]) -> Vec<i64> {
        let hi = self.qam.side() as i64 - 1;
        z.iter().map(|v| (*v).clamp(0, hi)).collect()
    }

    pub fn levels_to_bits(&self, z: &[i64]) -> Vec<u8> {
        let n = self.n_complex();
        let mut out = Vec::with_capacity(n * self.qam.bits_per_symbol());
        for j in 0..n {
            self.qam.levels_to_bits(z[j], z[n + j], &mut out);
        }
        out
    }

    pub fn bits_to_levels(&self, bits: &[u8]) -> Vec<i64> {
        let n = self.n_complex();
        let mut z = vec![0; 2 * n];
        for (j, chunk) in bits.chunks(self.qam.bits_per_symbol()).enumerate() {
            let (i, q) = self.qam.bits_to_levels(chunk);
            z[j] = i;
            z[n + j] = q;
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn scalar_unit_channel_is_identity() {
        let ch = ComplexChannel::new(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        assert_eq!(ch.b_real, DMatrix::identity(2, 2));
    }

    #[test]
    fn embedding_is_isometric() {
        let mut rng = stream_rng(61, 0);
        let qam = Qam::new(16).unwrap();
        for _ in 0..50 {
            let ch = ComplexChannel::random(3, &mut rng);
            let x: Vec<Complex64> = (0..3).map(|_| complex_normal(&mut rng)).collect();
            let c: Vec<Complex64> = (0..3).map(|_| complex_normal(&mut rng) * 3.0).collect();
            let hx = ch.apply(&x);
            let complex_norm: f64 = hx
                .iter()
                .zip(&c)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let real_norm = (&ch.b_real * real_vector(&x) - real_vector(&c)).norm();
            assert!((complex_norm - real_norm).abs() < 1e-10);

            // on-grid symbols: lattice distance equals complex distance
            let z: Vec<i64> = (0..6).map(|_| rng.random_range(0..4)).collect();
            let sys = embed_real(&ch, &c, qam).unwrap();
            let s = sys.levels_to_symbols(&z);
            let hs = ch.apply(&s);
            let want: f64 = hs.iter().zip(&c).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!((sys.basis.dist_sq(&z, &sys.c) - want).abs() < 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn constellation_round_trip() {
        let qam = Qam::new(16).unwrap();
        let ch = ComplexChannel::new(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let sys = embed_real(&ch, &[Complex64::new(0.0, 0.0)], qam).unwrap();
        for p in qam.constellation() {
            let z = sys.symbols_to_levels(&[p]);
            assert_eq!(sys.levels_to_symbols(&z), vec![p]);
            assert_eq!(sys.bits_to_levels(&sys.levels_to_bits(&z)), z);
        }
    }

    #[test]
    fn clip_bounds() {
        let qam = Qam::new(16).unwrap();
        let ch = ComplexChannel::new(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
        let sys = embed_real(&ch, &[Complex64::new(0.0, 0.0)], qam).unwrap();
        assert_eq!(sys.clip(&[-3, 7]), vec![0, 3]);
    }

    #[test]
    fn singular_channel_rejected() {
        let ch = ComplexChannel::new(DMatrix::from_element(2, 2, Complex64::new(1.0, 0.5)));
        assert!(embed_real(&ch, &[Complex64::new(0.0, 0.0); 2], Qam::new(4).unwrap()).is_err());
    }
}
