//! Markov chains targeting the lattice Gaussian `D_{Λ,σ,c}`.
//!
//! * [`MhkSampler`]: independent Metropolis-Hastings with Klein proposals.
//! * [`MtmkSampler`]: independent multiple-try Metropolis with `k` Klein
//!   trials per move, using the reference-sample shortcut (the remaining
//!   trials double as reference points, the current state fills the slot of
//!   the selected one).
//! * [`GibbsSampler`]: backward systematic-scan Gibbs baseline.
//!
//! Acceptance is evaluated in the log domain: accept iff `u < exp(min(0, Δ))`.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{LatticeError, Result};
use crate::gaussian::{log_rho_sum_z, ZGaussian};
use crate::klein::KleinSampler;
use crate::lattice::{enumerate_ball, Basis, GaussianSpec, LatticePoint};

/// A chain's current position with cached log quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Vec<i64>,
    /// `ln q(x)` under the Klein proposal (0 for Gibbs chains, where it is unused).
    pub log_q: f64,
    /// `−‖Bx − c‖² / (2σ²)`.
    pub log_pi_unnorm: f64,
    pub move_index: u64,
}

impl ChainState {
    /// Log importance weight up to the constant `−ln ρ_{σ,c}(Λ)`.
    pub fn log_weight(&self) -> f64 {
        self.log_pi_unnorm - self.log_q
    }

    /// `‖Bx − c‖²` recovered from the cached target weight.
    pub fn dist_sq(&self, sigma: f64) -> f64 {
        -2.0 * sigma * sigma * self.log_pi_unnorm
    }
}

/// Common interface of the three chains.
pub trait MarkovSampler {
    fn basis(&self) -> &Basis;
    fn spec(&self) -> &GaussianSpec;
    fn init_state(&self, x0: Vec<i64>) -> ChainState;
    /// One Markov move; the flag reports whether a new state was accepted.
    fn step<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> (ChainState, bool);
}

/// Numerically stable `ln Σ exp(v_i)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    u < log_ratio.min(0.0).exp()
}

fn klein_state(klein: &KleinSampler, x: Vec<i64>, move_index: u64) -> ChainState {
    let (log_q, dist_sq) = klein.evaluate(&x);
    let s = klein.spec().sigma;
    ChainState {
        x,
        log_q,
        log_pi_unnorm: -dist_sq / (2.0 * s * s),
        move_index,
    }
}

#[derive(Debug, Clone)]
pub struct MhkSampler {
    pub klein: KleinSampler,
}

impl MhkSampler {
    pub fn new(klein: KleinSampler) -> Self {
        MhkSampler { klein }
    }

    fn propose<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> ChainState {
        let d = self.klein.sample(rng);
        let s = self.klein.spec().sigma;
        ChainState {
            x: d.x,
            log_q: d.log_q,
            log_pi_unnorm: -d.dist_sq / (2.0 * s * s),
            move_index: state.move_index + 1,
        }
    }
}

impl MarkovSampler for MhkSampler {
    fn basis(&self) -> &Basis {
        self.klein.basis()
    }

    fn spec(&self) -> &GaussianSpec {
        self.klein.spec()
    }

    fn init_state(&self, x0: Vec<i64>) -> ChainState {
        klein_state(&self.klein, x0, 0)
    }

    fn step<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> (ChainState, bool) {
        let y = self.propose(state, rng);
        if accept(y.log_weight() - state.log_weight(), rng) {
            (y, true)
        } else {
            let mut same = state.clone();
            same.move_index += 1;
            (same, false)
        }
    }
}

#[derive(Debug, Clone)]
pub struct MtmkSampler {
    pub klein: KleinSampler,
    k: usize,
}

impl MtmkSampler {
    pub fn new(klein: KleinSampler, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(LatticeError::Domain("trial count k must be >= 1".into()));
        }
        Ok(MtmkSampler { klein, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Index drawn with probability proportional to `exp(log_w[i])`.
fn select_by_weight<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    // only reachable through rounding in the running subtraction
    w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0)
}

impl MarkovSampler for MtmkSampler {
    fn basis(&self) -> &Basis {
        self.klein.basis()
    }

    fn spec(&self) -> &GaussianSpec {
        self.klein.spec()
    }

    fn init_state(&self, x0: Vec<i64>) -> ChainState {
        klein_state(&self.klein, x0, 0)
    }

    fn step<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> (ChainState, bool) {
        let s = self.klein.spec().sigma;
        let trials: Vec<ChainState> = (0..self.k)
            .map(|_| {
                let d = self.klein.sample(rng);
                ChainState {
                    x: d.x,
                    log_q: d.log_q,
                    log_pi_unnorm: -d.dist_sq / (2.0 * s * s),
                    move_index: state.move_index + 1,
                }
            })
            .collect();
        let log_w: Vec<f64> = trials.iter().map(ChainState::log_weight).collect();
        let (chosen, log_ratio) = if self.k == 1 {
            (0, log_w[0] - state.log_weight())
        } else {
            let c = select_by_weight(&log_w, rng);
            let mut reference = log_w.clone();
            reference[c] = state.log_weight();
            (c, log_sum_exp(&log_w) - log_sum_exp(&reference))
        };
        if accept(log_ratio, rng) {
            (trials.into_iter().nth(chosen).expect("chosen < k"), true)
        } else {
            let mut same = state.clone();
            same.move_index += 1;
            (same, false)
        }
    }
}

/// Backward systematic-scan Gibbs sampler. Coordinate `i` given the rest is
/// `D_{Z, σ/‖b_i‖, x_i + b_iᵀ(c − Bx)/‖b_i‖²}`.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    basis: Basis,
    spec: GaussianSpec,
    col_norm_sq: Vec<f64>,
}

impl GibbsSampler {
    pub fn new(basis: Basis, spec: GaussianSpec) -> Result<Self> {
        if spec.dim() != basis.dim() {
            return Err(LatticeError::Dimension {
                expected: basis.dim(),
                got: spec.dim(),
            });
        }
        let col_norm_sq = basis
            .matrix()
            .column_iter()
            .map(|c| c.norm_squared())
            .collect();
        Ok(GibbsSampler {
            basis,
            spec,
            col_norm_sq,
        })
    }

    fn state_for(&self, x: Vec<i64>, move_index: u64) -> ChainState {
        let d = self.basis.dist_sq(&x, &self.spec.center);
        let s = self.spec.sigma;
        ChainState {
            x,
            log_q: 0.0,
            log_pi_unnorm: -d / (2.0 * s * s),
            move_index,
        }
    }
}

impl MarkovSampler for GibbsSampler {
    fn basis(&self) -> &Basis {
        &self.basis
    }

    fn spec(&self) -> &GaussianSpec {
        &self.spec
    }

    fn init_state(&self, x0: Vec<i64>) -> ChainState {
        self.state_for(x0, 0)
    }

    fn step<R: Rng + ?Sized>(&self, state: &ChainState, rng: &mut R) -> (ChainState, bool) {
        let b = self.basis.matrix();
        let mut x = state.x.clone();
        let mut resid: DVector<f64> = &self.spec.center - self.basis.embed(&x);
        for i in (0..x.len()).rev() {
            let col = b.column(i);
            let center = x[i] as f64 + col.dot(&resid) / self.col_norm_sq[i];
            let std = self.spec.sigma / self.col_norm_sq[i].sqrt();
            let xi = ZGaussian::new(std, center)
                .expect("positive std")
                .sample(rng);
            if xi != x[i] {
                resid.axpy(-((xi - x[i]) as f64), &col, 1.0);
                x[i] = xi;
            }
        }
        (self.state_for(x, state.move_index + 1), true)
    }
}

/// Runs `moves` steps from `x0`, calling `observer` after every move with the
/// new state and its acceptance flag.
pub fn run_chain<S, R, F>(
    sampler: &S,
    x0: Vec<i64>,
    moves: u64,
    rng: &mut R,
    mut observer: F,
) -> ChainState
where
    S: MarkovSampler,
    R: Rng + ?Sized,
    F: FnMut(&ChainState, bool),
{
    let mut state = sampler.init_state(x0);
    for _ in 0..moves {
        let (next, accepted) = sampler.step(&state, rng);
        observer(&next, accepted);
        state = next;
    }
    state
}

/// Result of enumerating enough of a lattice to cover a target ρ-mass.
#[derive(Debug, Clone)]
pub struct MassEnumeration {
    /// Points with `‖Bx − c‖ ≤ radius`, lexicographic order.
    pub points: Vec<LatticePoint>,
    /// `ln Σ ρ_{σ,c}(Bx)` over `points`.
    pub log_rho_sum: f64,
    pub radius: f64,
}

/// Default mass coverage for [`delta_bound`].
pub const DEFAULT_DELTA_COVERAGE: f64 = 1.0 - 1e-12;

/// `ln` of Banaszczyk's tail constant `C(u) = u √(2πe) e^{−πu²}`.
fn ln_banaszczyk(u: f64) -> f64 {
    let pi = std::f64::consts::PI;
    u.ln() + 0.5 * (2.0 * pi).ln() + 0.5 - pi * u * u
}

/// Enumerates a ball around `c` holding at least `mass` of `ρ_{σ,c}(Λ)`.
///
/// Tail bound: with `s = √(2π) σ`, Banaszczyk's lemma for shifted lattices
/// gives `ρ((Λ − c) \ u s √n · Ball) ≤ 2 C(u)^n ρ(Λ)` for `u ≥ 1/√(2π)`, and
/// the backward-sum argument gives `ρ(Λ) ≤ Π_i ρ_{σ_i}(Z)`. The radius grows
/// (starting at `u = u_start`) until the tail bound is at most
/// `(1 − mass)/mass` times the enumerated sum, i.e. the enumerated share of
/// the total is at least `mass`.
pub fn enumerate_mass(
    basis: &Basis,
    spec: &GaussianSpec,
    mass: f64,
    u_start: f64,
) -> Result<MassEnumeration> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(LatticeError::Domain(format!(
            "mass coverage must be in (0,1), got {mass}"
        )));
    }
    let n = basis.dim() as f64;
    let s = (2.0 * std::f64::consts::PI).sqrt() * spec.sigma;
    let ln_d = log_partition_zero(basis, spec.sigma);
    let mut u = u_start.max(1.0 / (2.0 * std::f64::consts::PI).sqrt() + 1e-9);
    loop {
        let radius = u * s * n.sqrt();
        let points = enumerate_ball(basis, &spec.center, radius)?;
        let two_var = 2.0 * spec.sigma * spec.sigma;
        let logs: Vec<f64> = points
            .iter()
            .map(|p| -(&p.embedded - &spec.center).norm_squared() / two_var)
            .collect();
        let log_rho_sum = log_sum_exp(&logs);
        let ln_tail = std::f64::consts::LN_2 + n * ln_banaszczyk(u) + ln_d;
        if !points.is_empty() && ln_tail <= (1.0 - mass).ln() - mass.ln() + log_rho_sum {
            return Ok(MassEnumeration {
                points,
                log_rho_sum,
                radius,
            });
        }
        u *= 1.15;
    }
}

/// `ln Π_i ρ_{σ/r_ii}(Z)` with zero centers.
fn log_partition_zero(basis: &Basis, sigma: f64) -> f64 {
    basis
        .gs_norms()
        .iter()
        .map(|r| log_rho_sum_z(&ZGaussian::new(sigma / r, 0.0).expect("positive sigma")))
        .sum()
}

/// `δ = ρ_{σ,c}(Λ) / Π_i ρ_{σ_i}(Z)`, a lower bound on the MHK spectral gap.
/// The numerator is the enumerated (hence slightly low) sum, which keeps the
/// bound conservative.
pub fn delta_bound(basis: &Basis, spec: &GaussianSpec, mass_coverage: f64) -> Result<f64> {
    if spec.dim() != basis.dim() {
        return Err(LatticeError::Dimension {
            expected: basis.dim(),
            got: spec.dim(),
        });
    }
    let e = enumerate_mass(basis, spec, mass_coverage, 1.0)?;
    let log_delta = e.log_rho_sum - log_partition_zero(basis, spec.sigma);
    Ok(log_delta.exp().min(1.0))
}

/// `δ_MTM = k / (k − 1 + 1/δ)`.
pub fn delta_mtm(delta: f64, k: usize) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(LatticeError::Domain(format!(
            "delta must be in (0,1], got {delta}"
        )));
    }
    if k == 0 {
        return Err(LatticeError::Domain("trial count k must be >= 1".into()));
    }
    if k == 1 {
        return Ok(delta);
    }
    let k = k as f64;
    Ok(k / (k - 1.0 + 1.0 / delta))
}
