//! Sample-based bit log-likelihood ratios.

use crate::mimo::channel::EmbeddedSystem;
use crate::samplers::log_sum_exp;

/// Magnitude used when one bit class has no samples, and the overall clamp.
pub const LLR_CLAMP: f64 = 50.0;

/// `L(b_i) = ln Σ_{x: b_i=1} e^{−‖c−Hx‖²/(2σ²)} − ln Σ_{x: b_i=0} …` over the
/// distinct samples (given as integer levels; out-of-box entries are clipped).
/// An empty class yields `±LLR_CLAMP`, and every value is clamped to
/// `[−LLR_CLAMP, LLR_CLAMP]`.
pub fn llr_compute(samples: &[Vec<i64>], sys: &EmbeddedSystem, sigma: f64) -> Vec<f64> {
    let mut distinct: Vec<Vec<i64>> = samples.iter().map(|z| sys.clip(z)).collect();
    distinct.sort();
    distinct.dedup();
    let nbits = sys.n_complex() * sys.qam.bits_per_symbol();
    let labelled: Vec<(Vec<u8>, f64)> = distinct
        .iter()
        .map(|z| {
            (
                sys.levels_to_bits(z),
                -sys.basis.dist_sq(z, &sys.c) / (2.0 * sigma * sigma),
            )
        })
        .collect();
    (0..nbits)
        .map(|i| {
            let (ones, zeros): (Vec<_>, Vec<_>) =
                labelled.iter().partition(|(bits, _)| bits[i] == 1);
            let l1 = log_sum_exp(&ones.iter().map(|p| p.1).collect::<Vec<_>>());
            let l0 = log_sum_exp(&zeros.iter().map(|p| p.1).collect::<Vec<_>>());
            match (ones.is_empty(), zeros.is_empty()) {
                (true, _) => -LLR_CLAMP,
                (_, true) => LLR_CLAMP,
                _ => (l1 - l0).clamp(-LLR_CLAMP, LLR_CLAMP),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mimo::channel::{embed_real, ComplexChannel};
    use crate::mimo::qam::Qam;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn scalar_system(m: usize, h: Complex64, c: Complex64) -> EmbeddedSystem {
        embed_real(
            &ComplexChannel::new(DMatrix::from_element(1, 1, h)),
            &[c],
            Qam::new(m).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_sample_saturates() {
        let sys = scalar_system(16, Complex64::new(1.0, 0.0), Complex64::new(0.1, -0.2));
        let z = vec![1, 2];
        let bits = sys.levels_to_bits(&z);
        let llr = llr_compute(&[z], &sys, 0.5);
        for (l, b) in llr.iter().zip(bits) {
            assert_eq!(*l, if b == 1 { LLR_CLAMP } else { -LLR_CLAMP });
        }
    }

    #[test]
    fn equidistant_opposite_bits_cancel() {
        // 4-QAM, received at the origin: level 0 and 1 are equidistant in I
        let sys = scalar_system(4, Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        let llr = llr_compute(&[vec![0, 0], vec![1, 0]], &sys, 0.7);
        assert!(llr[0].abs() < 1e-12);
        assert_eq!(llr[1], -LLR_CLAMP);
    }

    #[test]
    fn exhaustive_matches_direct_evaluation() {
        let h = Complex64::new(0.8, -0.3);
        let c = Complex64::new(0.35, 0.6);
        let sys = scalar_system(4, h, c);
        let qam = Qam::new(4).unwrap();
        let sigma = 0.6;
        let all: Vec<Vec<i64>> = (0..2)
            .flat_map(|i| (0..2).map(move |q| vec![i, q]))
            .collect();
        let llr = llr_compute(&all, &sys, sigma);
        for bit in 0..2 {
            let (mut num, mut den) = (0.0, 0.0);
            for z in &all {
                let x = qam.levels_to_symbol(z[0], z[1]);
                let w = (-(c - h * x).norm_sqr() / (2.0 * sigma * sigma)).exp();
                let mut bits = Vec::new();
                qam.levels_to_bits(z[0], z[1], &mut bits);
                if bits[bit] == 1 {
                    num += w
                } else {
                    den += w
                }
            }
            assert!((llr[bit] - (num / den).ln()).abs() < 1e-10);
        }
    }
}
