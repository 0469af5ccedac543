//! Klein's randomized nearest-plane sampler and its exact proposal law.
//!
//! Coordinates are drawn backwards, `i = n, …, 1`, each from
//! `D_{Z, σ/r_ii, x̃_i}` with `x̃_i = (c'_i − Σ_{j>i} r_ij x_j) / r_ii` and
//! `c' = Qᵀ c`. The probability of the drawn vector is the product of the
//! one-dimensional pmfs, which equals `ρ_{σ,c}(Bx) / Π_i ρ_{σ_i, x̃_i}(Z)`.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{LatticeError, Result};
use crate::gaussian::ZGaussian;
use crate::lattice::{Basis, GaussianSpec};

/// A Klein draw together with the quantities computed along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct KleinDraw {
    pub x: Vec<i64>,
    /// `ln q(x)`.
    pub log_q: f64,
    /// `‖Bx − c‖²`.
    pub dist_sq: f64,
}

#[derive(Debug, Clone)]
pub struct KleinSampler {
    basis: Basis,
    spec: GaussianSpec,
    c_prime: DVector<f64>,
    sigmas: Vec<f64>,
}

impl KleinSampler {
    pub fn new(basis: Basis, spec: GaussianSpec) -> Result<Self> {
        if spec.dim() != basis.dim() {
            return Err(LatticeError::Dimension {
                expected: basis.dim(),
                got: spec.dim(),
            });
        }
        let c_prime = basis.rotate(&spec.center);
        let sigmas = basis.gs_norms().iter().map(|r| spec.sigma / r).collect();
        Ok(KleinSampler {
            basis,
            spec,
            c_prime,
            sigmas,
        })
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn spec(&self) -> &GaussianSpec {
        &self.spec
    }

    pub fn c_prime(&self) -> &DVector<f64> {
        &self.c_prime
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `x̃_i` given the already fixed coordinates `x_{i+1..n}`.
    fn level_center(&self, i: usize, x: &[i64]) -> f64 {
        let r = self.basis.r();
        let mut acc = self.c_prime[i];
        for j in (i + 1)..x.len() {
            acc -= r[(i, j)] * x[j] as f64;
        }
        acc / r[(i, i)]
    }

    fn level(&self, i: usize, x: &[i64]) -> ZGaussian {
        ZGaussian::new(self.sigmas[i], self.level_center(i, x))
            .expect("sigma_i > 0 and finite center")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> KleinDraw {
        let n = self.dim();
        let mut x = vec![0i64; n];
        let mut log_q = 0.0;
        let mut dist_sq = 0.0;
        for i in (0..n).rev() {
            let zg = self.level(i, &x);
            let (xi, log_sum) = zg.sample_with_log_sum(rng);
            x[i] = xi;
            log_q += zg.log_rho(xi) - log_sum;
            let d = self.basis.gs_norms()[i] * (xi as f64 - zg.center());
            dist_sq += d * d;
        }
        KleinDraw { x, log_q, dist_sq }
    }

    /// `(ln q(x), ‖Bx − c‖²)` by one backward pass.
    pub fn evaluate(&self, x: &[i64]) -> (f64, f64) {
        assert_eq!(x.len(), self.dim());
        let mut log_q = 0.0;
        let mut dist_sq = 0.0;
        for i in (0..x.len()).rev() {
            let zg = self.level(i, x);
            log_q += zg.log_rho(x[i]) - zg.log_rho_sum();
            let d = self.basis.gs_norms()[i] * (x[i] as f64 - zg.center());
            dist_sq += d * d;
        }
        (log_q, dist_sq)
    }

    /// `ln Π_i ρ_{σ_i, x̃_i}(Z)` along the backward pass for `x`. Up to an
    /// additive constant this is the log importance weight `ln π(x)/q(x)`.
    pub fn log_partition_product(&self, x: &[i64]) -> f64 {
        (0..x.len())
            .rev()
            .map(|i| self.level(i, x).log_rho_sum())
            .sum()
    }
}

pub fn klein_sample<R: Rng + ?Sized>(ks: &KleinSampler, rng: &mut R) -> (Vec<i64>, f64) {
    let d = ks.sample(rng);
    (d.x, d.log_q)
}

pub fn proposal_logprob(ks: &KleinSampler, x: &[i64]) -> f64 {
    ks.evaluate(x).0
}

/// The two standard deviation choices for a basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaChoices {
    /// `min_i ‖b̂_i‖ / (2√π)`, used by the decoders.
    pub decoder: f64,
    /// Klein's `min_i ‖b̂_i‖ / √(2 ln n)`.
    pub klein_log: f64,
}

pub fn klein_sigma_default(basis: &Basis) -> Result<SigmaChoices> {
    let n = basis.dim();
    if n < 2 {
        return Err(LatticeError::Domain("sqrt(2 ln n) needs n >= 2".into()));
    }
    let m = basis.min_gs_norm();
    Ok(SigmaChoices {
        decoder: m / (2.0 * std::f64::consts::PI.sqrt()),
        klein_log: m / (2.0 * (n as f64).ln()).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{pmf_z, rho, theta3};
    use crate::lattice::lll_reduce;
    use crate::rng::stream_rng;
    use std::f64::consts::PI;

    fn sampler(rows: &[[f64; 2]], sigma: f64, c: [f64; 2]) -> KleinSampler {
        let b = Basis::from_rows(rows).unwrap();
        KleinSampler::new(
            b,
            GaussianSpec::new(sigma, DVector::from_row_slice(&c)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_basis_factorizes() {
        let ks = sampler(&[[1.0, 0.0], [0.0, 1.0]], 0.7, [0.3, -1.2]);
        for x in [[0i64, -1], [1, 0], [-2, 3]] {
            let want = (pmf_z(x[0], &ZGaussian::new(0.7, 0.3).unwrap())
                * pmf_z(x[1], &ZGaussian::new(0.7, -1.2).unwrap()))
            .ln();
            assert!((proposal_logprob(&ks, &x) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn concentrated_proposal_returns_planted_point() {
        let b = Basis::from_rows(&[[2.0, 1.0], [0.3, 1.5]]).unwrap();
        let xstar = [3i64, -2];
        let c = b.embed(&xstar);
        let sigma = 0.01 * b.min_gs_norm();
        let ks = KleinSampler::new(b, GaussianSpec::new(sigma, c).unwrap()).unwrap();
        let mut rng = stream_rng(21, 0);
        for _ in 0..1000 {
            assert_eq!(ks.sample(&mut rng).x, xstar.to_vec());
        }
    }

    #[test]
    fn sampled_log_q_matches_evaluation() {
        let ks = sampler(&[[2.0, 1.0], [0.0, 1.0]], 1.0, [0.5, 0.5]);
        let mut rng = stream_rng(22, 0);
        for _ in 0..500 {
            let d = ks.sample(&mut rng);
            let (lq, dist) = ks.evaluate(&d.x);
            assert!((d.log_q - lq).abs() < 1e-10);
            assert!((d.dist_sq - dist).abs() < 1e-9);
            assert!((dist - ks.basis().dist_sq(&d.x, &ks.spec().center)).abs() < 1e-9);
            assert!(d.log_q <= 0.0);
        }
    }

    #[test]
    fn empirical_frequencies_match_proposal() {
        let ks = sampler(&[[2.0, 1.0], [0.0, 1.0]], 1.0, [0.5, 0.5]);
        let mut points: Vec<(Vec<i64>, f64)> = Vec::new();
        for a in -12..=12 {
            for b in -12..=12 {
                points.push((vec![a, b], proposal_logprob(&ks, &[a, b]).exp()));
            }
        }
        points.sort_by(|p, q| q.1.total_cmp(&p.1));
        points.truncate(20);
        let draws = 100_000usize;
        let mut obs = vec![0.0; 21];
        let mut rng = stream_rng(24, 0);
        for _ in 0..draws {
            let x = ks.sample(&mut rng).x;
            let cell = points.iter().position(|p| p.0 == x).unwrap_or(20);
            obs[cell] += 1.0;
        }
        let mut exp: Vec<f64> = points.iter().map(|p| p.1 * draws as f64).collect();
        exp.push(draws as f64 - exp.iter().sum::<f64>());
        assert!(crate::testutil::chi_square_p(&obs, &exp) > 0.001);
    }

    #[test]
    fn proposal_normalizes_over_box() {
        let ks = sampler(&[[2.0, 1.0], [0.0, 1.0]], 1.0, [0.5, 0.5]);
        let mut total = 0.0;
        for a in -15..=15 {
            for b in -15..=15 {
                total += proposal_logprob(&ks, &[a, b]).exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn klein_lower_bound_holds() {
        let ks = sampler(&[[1.5, 0.4], [0.2, 0.9]], 0.6, [0.3, -0.1]);
        let theta_prod: f64 = ks
            .basis()
            .gs_norms()
            .iter()
            .map(|r| theta3(r * r / (2.0 * PI * 0.36)).unwrap())
            .product();
        let mut rng = stream_rng(23, 0);
        for _ in 0..2000 {
            let d = ks.sample(&mut rng);
            let bound = rho(&ks.basis().embed(&d.x), ks.spec()) / theta_prod;
            assert!(d.log_q.exp() >= bound - 1e-12);
        }
    }

    #[test]
    fn sigma_defaults() {
        let s = klein_sigma_default(&Basis::identity(4)).unwrap();
        assert!((s.decoder - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-15);
        assert!((s.klein_log - 1.0 / (2.0 * 4f64.ln()).sqrt()).abs() < 1e-15);
        assert!(klein_sigma_default(&Basis::identity(1)).is_err());
    }

    #[test]
    fn lll_raises_decoder_sigma() {
        let b = Basis::from_rows(&[[1.0, 0.99], [0.0, 0.1]]).unwrap();
        let (red, _) = lll_reduce(&b, 0.75).unwrap();
        let before = klein_sigma_default(&b).unwrap().decoder;
        let after = klein_sigma_default(&red).unwrap().decoder;
        assert!(red.min_gs_norm() > b.min_gs_norm());
        assert!(after > before);
    }

    #[test]
    fn dimension_mismatch() {
        let spec = GaussianSpec::new(1.0, DVector::zeros(3)).unwrap();
        assert!(KleinSampler::new(Basis::identity(2), spec).is_err());
    }
}
