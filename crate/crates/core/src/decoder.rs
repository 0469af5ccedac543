//! Sampling decoders for CVP / BDD: run an MHK (k = 1), MTMK (k > 1) or
//! Gibbs chain from the Babai point and keep the closest accepted state.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LatticeError, Result};
use crate::gaussian::theta3;
use crate::klein::{klein_sigma_default, KleinSampler};
use crate::lattice::{babai_round, cvp_bruteforce, lll_reduce, Basis, GaussianSpec, DEFAULT_KAPPA};
use crate::rng::{stream_rng, substream};
use crate::samplers::{run_chain, GibbsSampler, MarkovSampler, MhkSampler, MtmkSampler};

/// Bits of the stream id reserved for the shard index.
const SHARD_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaPolicy {
    /// `min ‖b̂_i‖ / (2√π)`.
    Default2SqrtPi,
    /// `min ‖b̂_i‖ / √(2 ln n)`.
    KleinLog,
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// MHK when `trials_k == 1`, MTMK otherwise.
    Klein,
    Gibbs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeConfig {
    pub sigma_policy: SigmaPolicy,
    pub moves: u64,
    pub trials_k: usize,
    pub use_lll: bool,
    pub eps: f64,
    pub seed: u64,
    /// Stream namespace within `seed`; callers decoding many instances under
    /// one seed give each instance its own stream.
    pub stream: u64,
    pub shards: usize,
    pub chain: ChainKind,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            sigma_policy: SigmaPolicy::Default2SqrtPi,
            moves: 50,
            trials_k: 1,
            use_lll: true,
            eps: 0.01,
            seed: 0,
            stream: 0,
            shards: 1,
            chain: ChainKind::Klein,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.moves < 1 {
            return Err(LatticeError::Domain("moves must be >= 1".into()));
        }
        if self.trials_k < 1 {
            return Err(LatticeError::Domain("trials_k must be >= 1".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(LatticeError::Domain(format!(
                "eps must be in (0,1), got {}",
                self.eps
            )));
        }
        if self.shards < 1 || self.shards > (1 << SHARD_BITS) {
            return Err(LatticeError::Domain(format!(
                "shards must be in [1, {}]",
                1u64 << SHARD_BITS
            )));
        }
        if let SigmaPolicy::Explicit(s) = self.sigma_policy {
            if !(s > 0.0 && s.is_finite()) {
                return Err(LatticeError::Domain(format!(
                    "sigma must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub x_cvp: Vec<i64>,
    /// `‖B x_cvp − c‖`.
    pub distance: f64,
    pub moves_used: u64,
    pub acceptance_rate: f64,
    /// Move indices (1-based, counted across shards in order) at which the
    /// tracked argmin improved.
    pub improved_at: Vec<u64>,
}

/// `min ‖b̂_i‖ / (2√π)`.
pub fn sigma_default(basis: &Basis) -> f64 {
    basis.min_gs_norm() / (2.0 * std::f64::consts::PI.sqrt())
}

/// Standard deviation chosen by `policy` for `basis`.
pub fn resolve_sigma(basis: &Basis, policy: SigmaPolicy) -> Result<f64> {
    match policy {
        SigmaPolicy::Default2SqrtPi => Ok(sigma_default(basis)),
        SigmaPolicy::KleinLog => Ok(klein_sigma_default(basis)?.klein_log),
        SigmaPolicy::Explicit(s) => Ok(s),
    }
}

struct ShardOutcome {
    best: Vec<i64>,
    best_dist_sq: f64,
    improvements: Vec<(u64, f64)>,
    accepted: u64,
}

fn run_shard<S: MarkovSampler, R: Rng>(
    sampler: &S,
    x0: &[i64],
    d0: f64,
    moves: u64,
    rng: &mut R,
) -> ShardOutcome {
    let sigma = sampler.spec().sigma;
    let mut out = ShardOutcome {
        best: x0.to_vec(),
        best_dist_sq: d0,
        improvements: Vec::new(),
        accepted: 0,
    };
    run_chain(sampler, x0.to_vec(), moves, rng, |st, accepted| {
        if !accepted {
            return;
        }
        out.accepted += 1;
        let d = st.dist_sq(sigma);
        if d < out.best_dist_sq {
            out.best_dist_sq = d;
            out.best = st.x.clone();
            out.improvements.push((st.move_index, d));
        }
    });
    out
}

fn shard_moves(total: u64, shards: usize, s: usize) -> u64 {
    let base = total / shards as u64;
    base + u64::from((s as u64) < total % shards as u64)
}

/// Decodes `c` on the lattice of `basis`. Deterministic in
/// `(cfg.seed, cfg.stream, cfg.shards)`.
pub fn decode_cvp(basis: &Basis, c: &DVector<f64>, cfg: &DecodeConfig) -> Result<DecodeResult> {
    cfg.validate()?;
    if c.len() != basis.dim() {
        return Err(LatticeError::Dimension {
            expected: basis.dim(),
            got: c.len(),
        });
    }
    let (work, unimodular) = if cfg.use_lll {
        let (red, u) = lll_reduce(basis, DEFAULT_KAPPA)?;
        (red, Some(u))
    } else {
        (basis.clone(), None)
    };
    let sigma = resolve_sigma(&work, cfg.sigma_policy)?;
    let spec = GaussianSpec::new(sigma, c.clone())?;
    let x0 = babai_round(&work, c).x;
    let d0 = work.dist_sq(&x0, c);

    let outcomes: Vec<ShardOutcome> = (0..cfg.shards)
        .map(|s| {
            let moves = shard_moves(cfg.moves, cfg.shards, s);
            let mut rng = stream_rng(cfg.seed, substream(cfg.stream, s as u64, SHARD_BITS));
            Ok(match cfg.chain {
                ChainKind::Gibbs => run_shard(
                    &GibbsSampler::new(work.clone(), spec.clone())?,
                    &x0,
                    d0,
                    moves,
                    &mut rng,
                ),
                ChainKind::Klein => {
                    let klein = KleinSampler::new(work.clone(), spec.clone())?;
                    if cfg.trials_k == 1 {
                        run_shard(&MhkSampler::new(klein), &x0, d0, moves, &mut rng)
                    } else {
                        run_shard(
                            &MtmkSampler::new(klein, cfg.trials_k)?,
                            &x0,
                            d0,
                            moves,
                            &mut rng,
                        )
                    }
                }
            })
        })
        .collect::<Result<_>>()?;

    // merge in shard order, renumbering moves globally
    let mut best = x0;
    let mut best_d = d0;
    let mut improved_at = Vec::new();
    let mut offset = 0u64;
    let mut accepted = 0u64;
    for (s, o) in outcomes.into_iter().enumerate() {
        let shard_wins = o.best_dist_sq < best_d;
        for &(idx, d) in &o.improvements {
            if d < best_d {
                best_d = d;
                improved_at.push(offset + idx);
            }
        }
        if shard_wins {
            best = o.best;
        }
        accepted += o.accepted;
        offset += shard_moves(cfg.moves, cfg.shards, s);
    }
    let x_cvp = match unimodular {
        Some(u) => (u * DVector::from_vec(best)).iter().copied().collect(),
        None => best,
    };
    let distance = basis.dist_sq(&x_cvp, c).sqrt();
    Ok(DecodeResult {
        x_cvp,
        distance,
        moves_used: cfg.moves,
        acceptance_rate: accepted as f64 / cfg.moves as f64,
        improved_at,
    })
}

/// `ln(1/ε) · exp(d² / (2σ²))`, kept in log form so large exponents do not
/// overflow. The θ₃ pre-exponential product `Π θ₃(‖b̂_i‖²/(2πσ²))` is
/// reported separately and not folded in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityEstimate {
    pub log_value: f64,
    /// `exp(log_value)`, `+∞` when it overflows.
    pub value: f64,
    pub overflow: bool,
    pub theta_factor: f64,
}

pub fn cvp_complexity_estimate(
    basis: &Basis,
    spec: &GaussianSpec,
    distance: f64,
    eps: f64,
) -> Result<ComplexityEstimate> {
    if !(distance >= 0.0) {
        return Err(LatticeError::Domain(format!(
            "distance must be >= 0, got {distance}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LatticeError::Domain(format!(
            "eps must be in (0,1), got {eps}"
        )));
    }
    let s2 = spec.sigma * spec.sigma;
    let log_value = (1.0 / eps).ln().ln() + distance * distance / (2.0 * s2);
    let value = log_value.exp();
    let theta_factor = basis
        .gs_norms()
        .iter()
        .map(|r| theta3(r * r / (2.0 * std::f64::consts::PI * s2)))
        .product::<Result<f64>>()?;
    Ok(ComplexityEstimate {
        log_value,
        value,
        overflow: value.is_infinite(),
        theta_factor,
    })
}

/// Correct-decoding radius `σ √(2 ln(k t / a))` with `a = ln(1/ε)`.
pub fn bdd_radius(sigma: f64, t: f64, eps: f64, k: usize) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LatticeError::Domain(format!(
            "eps must be in (0,1), got {eps}"
        )));
    }
    if k == 0 {
        return Err(LatticeError::Domain("trial count k must be >= 1".into()));
    }
    let a = (1.0 / eps).ln();
    let kt = k as f64 * t;
    if !(kt > a) {
        return Err(LatticeError::UndefinedRadius { kt, a });
    }
    Ok(sigma * (2.0 * (kt / a).ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BddRow {
    pub noise_norm: f64,
    pub successes: u64,
    pub trials: u64,
    pub success_rate: f64,
    /// `None` when `k t ≤ ln(1/ε)`.
    pub r_predicted: Option<f64>,
}

/// Range of planted coefficients.
const PLANT_RANGE: i64 = 5;
/// Redraws allowed when the planted point is not the true CVP answer.
const MAX_REDRAWS: u64 = 1000;

/// Empirical probability that [`decode_cvp`] recovers a planted point
/// `x*` from `c = Bx* + noise` with `‖noise‖ = noise_norm`, uniform direction.
///
/// Instance `i` reuses the same planted point, noise direction and decoder
/// stream at every noise norm (common random numbers). Instances whose
/// planted point is not the exact CVP answer are redrawn.
pub fn bdd_success_curve(
    basis: &Basis,
    cfg: &DecodeConfig,
    noise_norms: &[f64],
    trials: u64,
) -> Result<Vec<BddRow>> {
    cfg.validate()?;
    let n = basis.dim();
    let sigma_basis = if cfg.use_lll {
        lll_reduce(basis, DEFAULT_KAPPA)?.0
    } else {
        basis.clone()
    };
    let sigma = resolve_sigma(&sigma_basis, cfg.sigma_policy)?;
    let r_predicted = bdd_radius(sigma, cfg.moves as f64, cfg.eps, cfg.trials_k).ok();
    noise_norms
        .iter()
        .map(|&norm| {
            let mut successes = 0;
            for i in 0..trials {
                let mut redraw = 0;
                let (xstar, c) = loop {
                    if redraw == MAX_REDRAWS {
                        return Err(LatticeError::Numerical(format!(
                            "no instance with the planted point as CVP at noise norm {norm}"
                        )));
                    }
                    let mut rng = stream_rng(cfg.seed ^ 0x5eed_b0dd, substream(i, redraw, 16));
                    let xstar: Vec<i64> = (0..n)
                        .map(|_| rng.random_range(-PLANT_RANGE..=PLANT_RANGE))
                        .collect();
                    let dir = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    let c = basis.embed(&xstar) + dir.normalize() * norm;
                    if cvp_bruteforce(basis, &c)?.x == xstar {
                        break (xstar, c);
                    }
                    redraw += 1;
                };
                let run = DecodeConfig {
                    stream: i,
                    ..cfg.clone()
                };
                if decode_cvp(basis, &c, &run)?.x_cvp == xstar {
                    successes += 1;
                }
            }
            Ok(BddRow {
                noise_norm: norm,
                successes,
                trials,
                success_rate: successes as f64 / trials.max(1) as f64,
                r_predicted,
            })
        })
        .collect()
}
