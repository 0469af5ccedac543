//! One-dimensional discrete Gaussian primitives.
//!
//! `ρ_{σ,c}(z) = exp(−‖z − c‖² / (2σ²))`. Sums and probabilities over `Z` are
//! evaluated on a finite window around the center; weights are normalized
//! against the largest term before exponentiation so that tiny `σ` never
//! underflows.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{LatticeError, Result};
use crate::lattice::GaussianSpec;

/// Default window half-width, in units of `σ`.
pub const DEFAULT_HALFWIDTH: u32 = 10;

/// Smallest number of integers kept on either side of `round(center)`.
const MIN_WINDOW: i64 = 10;

/// `ρ_{σ,c}(z)`.
pub fn rho(z: &DVector<f64>, spec: &GaussianSpec) -> f64 {
    log_rho(z, spec).exp()
}

/// `ln ρ_{σ,c}(z)`.
pub fn log_rho(z: &DVector<f64>, spec: &GaussianSpec) -> f64 {
    -(z - &spec.center).norm_squared() / (2.0 * spec.sigma * spec.sigma)
}

/// Jacobi theta function `ϑ₃(τ) = Σ_{n∈Z} exp(−π τ n²)`.
pub fn theta3(tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(LatticeError::Domain(format!(
            "theta3 needs tau > 0, got {tau}"
        )));
    }
    let mut sum = 1.0;
    let mut n = 1.0f64;
    loop {
        let term = (-std::f64::consts::PI * tau * n * n).exp();
        if term < 1e-18 {
            break;
        }
        sum += 2.0 * term;
        n += 1.0;
    }
    Ok(sum)
}

/// Discrete Gaussian `D_{Z,σ,c}` restricted to a window around its center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZGaussian {
    sigma: f64,
    center: f64,
    support_halfwidth: u32,
    lo: i64,
    hi: i64,
    anchor: i64,
}

impl ZGaussian {
    pub fn new(sigma: f64, center: f64) -> Result<Self> {
        Self::with_halfwidth(sigma, center, DEFAULT_HALFWIDTH)
    }

    pub fn with_halfwidth(sigma: f64, center: f64, support_halfwidth: u32) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(LatticeError::Domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !center.is_finite() {
            return Err(LatticeError::Domain(format!(
                "center must be finite, got {center}"
            )));
        }
        if support_halfwidth < DEFAULT_HALFWIDTH {
            return Err(LatticeError::Domain(format!(
                "support half-width must be at least {DEFAULT_HALFWIDTH}, got {support_halfwidth}"
            )));
        }
        let anchor = center.round() as i64;
        let reach = support_halfwidth as f64 * sigma;
        let lo = ((center - reach).floor() as i64).min(anchor - MIN_WINDOW);
        let hi = ((center + reach).ceil() as i64).max(anchor + MIN_WINDOW);
        Ok(ZGaussian {
            sigma,
            center,
            support_halfwidth,
            lo,
            hi,
            anchor,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn support_halfwidth(&self) -> u32 {
        self.support_halfwidth
    }

    /// Inclusive integer window `(lo, hi)`.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    /// Offset of the center from its nearest integer, in `[-1/2, 1/2]`.
    fn frac(&self) -> f64 {
        self.center - self.anchor as f64
    }

    fn inv_two_var(&self) -> f64 {
        1.0 / (2.0 * self.sigma * self.sigma)
    }

    /// `ln ρ_{σ,c}(x)` for an integer `x`.
    pub fn log_rho(&self, x: i64) -> f64 {
        let d = (x - self.anchor) as f64 - self.frac();
        -d * d * self.inv_two_var()
    }

    /// Log of the largest weight in the window (attained at `round(c)`).
    fn log_peak(&self) -> f64 {
        let f = self.frac();
        -f * f * self.inv_two_var()
    }

    /// Window sum of weights scaled by the peak, so the result is in `[1, ∞)`.
    fn scaled_sum(&self) -> f64 {
        let f = self.frac();
        let k = self.inv_two_var();
        let peak = self.log_peak();
        let mut sum = 0.0;
        for off in (self.lo - self.anchor)..=(self.hi - self.anchor) {
            let d = off as f64 - f;
            sum += (-d * d * k - peak).exp();
        }
        sum
    }

    /// `ln Σ_{x∈Z} ρ_{σ,c}(x)` over the window.
    pub fn log_rho_sum(&self) -> f64 {
        self.log_peak() + self.scaled_sum().ln()
    }

    /// `Σ_{x∈Z} ρ_{σ,c}(x)` over the window.
    pub fn rho_sum(&self) -> f64 {
        self.log_rho_sum().exp()
    }

    /// `ln D_{Z,σ,c}(x)`; `-∞` outside the window.
    pub fn log_pmf(&self, x: i64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        self.log_rho(x) - self.log_rho_sum()
    }

    pub fn pmf(&self, x: i64) -> f64 {
        self.log_pmf(x).exp()
    }

    /// Exact draw from the windowed pmf by inverse CDF, scanning outward from
    /// `round(c)`. Returns the sample and `ln Σ ρ` so callers that need the
    /// sample's probability do not recompute the partition sum.
    pub fn sample_with_log_sum<R: Rng + ?Sized>(&self, rng: &mut R) -> (i64, f64) {
        let total = self.scaled_sum();
        let log_sum = self.log_peak() + total.ln();
        let k = self.inv_two_var();
        let f = self.frac();
        let peak = self.log_peak();
        let weight = |off: i64| {
            let d = off as f64 - f;
            (-d * d * k - peak).exp()
        };
        let mut u = rng.random::<f64>() * total;
        let (lo, hi) = (self.lo - self.anchor, self.hi - self.anchor);
        u -= weight(0);
        if u < 0.0 {
            return (self.anchor, log_sum);
        }
        let mut step = 1i64;
        loop {
            let right = step <= hi;
            let left = -step >= lo;
            if !right && !left {
                // rounding residue: the scan exhausted the window
                return (self.anchor, log_sum);
            }
            // the side closer to the center comes first so mass is consumed in
            // order of decreasing weight
            let order = if f >= 0.0 {
                [step, -step]
            } else {
                [-step, step]
            };
            for off in order {
                if off > hi || off < lo {
                    continue;
                }
                u -= weight(off);
                if u < 0.0 {
                    return (self.anchor + off, log_sum);
                }
            }
            step += 1;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        self.sample_with_log_sum(rng).0
    }
}

/// `Σ_{x∈Z} ρ_{σ,c}(x)`.
pub fn rho_sum_z(zg: &ZGaussian) -> f64 {
    zg.rho_sum()
}

pub fn log_rho_sum_z(zg: &ZGaussian) -> f64 {
    zg.log_rho_sum()
}

pub fn pmf_z(x: i64, zg: &ZGaussian) -> f64 {
    zg.pmf(x)
}

pub fn sample_z<R: Rng + ?Sized>(zg: &ZGaussian, rng: &mut R) -> i64 {
    zg.sample(rng)
}
