//! Exact small-instance machinery: truncated targets, explicit transition
//! matrices, spectral gaps, total variation and mixing-time bounds.
//!
//! Truncation leakage (probability of proposing a state outside the
//! truncation) is folded into the diagonal, so every matrix built here is
//! exactly row-stochastic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LatticeError, Result};
use crate::klein::KleinSampler;
use crate::lattice::{Basis, GaussianSpec};
use crate::samplers::enumerate_mass;

/// States at or below this count use a dense eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 200;
pub const POWER_MAX_ITERS: usize = 10_000;

/// A finite truncation of `D_{Λ,σ,c}` sorted by descending importance weight.
#[derive(Debug, Clone)]
pub struct TruncatedStateSpace {
    pub states: Vec<Vec<i64>>,
    /// Target normalized over the truncation.
    pub pi: Vec<f64>,
    /// Exact Klein proposal probabilities (normalized over all of Zⁿ).
    pub q: Vec<f64>,
    /// `ln(π_i / q_i)`.
    pub log_w: Vec<f64>,
    /// Lower bound on both the π-mass and the q-mass covered.
    pub covered_mass: f64,
}

impl TruncatedStateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.states.iter().position(|s| s.as_slice() == x)
    }
}

/// Enumerates lattice points until both the target and the proposal mass
/// covered reach `mass`.
pub fn exact_target(basis: &Basis, spec: &GaussianSpec, mass: f64) -> Result<TruncatedStateSpace> {
    let klein = KleinSampler::new(basis.clone(), spec.clone())?;
    let two_var = 2.0 * spec.sigma * spec.sigma;
    let mut u_start = 1.0;
    loop {
        let e = enumerate_mass(basis, spec, mass, u_start)?;
        let log_q: Vec<f64> = e.points.iter().map(|p| klein.evaluate(&p.x).0).collect();
        let q_mass: f64 = log_q.iter().map(|l| l.exp()).sum();
        if q_mass < mass {
            u_start = e.radius
                / ((2.0 * std::f64::consts::PI).sqrt() * spec.sigma * (basis.dim() as f64).sqrt())
                * 1.15;
            continue;
        }
        let log_rho: Vec<f64> = e
            .points
            .iter()
            .map(|p| -(&p.embedded - &spec.center).norm_squared() / two_var)
            .collect();
        let mut rows: Vec<(Vec<i64>, f64, f64)> = e
            .points
            .into_iter()
            .zip(log_rho.iter().zip(&log_q))
            .map(|(p, (&lr, &lq))| (p.x, lr - e.log_rho_sum, lq))
            .collect();
        rows.sort_by(|a, b| {
            (b.1 - b.2)
                .total_cmp(&(a.1 - a.2))
                .then_with(|| a.0.cmp(&b.0))
        });
        return Ok(TruncatedStateSpace {
            log_w: rows.iter().map(|r| r.1 - r.2).collect(),
            pi: rows.iter().map(|r| r.1.exp()).collect(),
            q: rows.iter().map(|r| r.2.exp()).collect(),
            states: rows.into_iter().map(|r| r.0).collect(),
            covered_mass: q_mass.min(mass),
        });
    }
}

/// Row-stochastic matrix over the states of a [`TruncatedStateSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub p: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }

    /// Largest `|Σ_y P(x,y) − 1|`.
    pub fn max_row_defect(&self) -> f64 {
        self.p
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_{x,y} |π(x)P(x,y) − π(y)P(y,x)|`.
    pub fn detailed_balance_defect(&self, pi: &[f64]) -> f64 {
        let n = self.len();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                worst = worst.max((pi[i] * self.p[(i, j)] - pi[j] * self.p[(j, i)]).abs());
            }
        }
        worst
    }

    /// `‖πP − π‖_∞`.
    pub fn stationarity_defect(&self, pi: &[f64]) -> f64 {
        let row = DVector::from_column_slice(pi).transpose() * &self.p;
        row.iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Distribution after one step from `dist`.
    pub fn step_distribution(&self, dist: &[f64]) -> Vec<f64> {
        (DVector::from_column_slice(dist).transpose() * &self.p)
            .iter()
            .copied()
            .collect()
    }
}

fn fold_diagonal(p: &mut DMatrix<f64>) {
    for i in 0..p.nrows() {
        let off: f64 = (0..p.ncols()).filter(|&j| j != i).map(|j| p[(i, j)]).sum();
        p[(i, i)] = 1.0 - off;
    }
}

/// Independent MHK kernel: `P(x,y) = q(y) min{1, w(y)/w(x)}` for `y ≠ x`.
pub fn build_mhk_matrix(space: &TruncatedStateSpace) -> TransitionMatrix {
    let n = space.len();
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[(i, j)] = space.q[j] * (space.log_w[j] - space.log_w[i]).min(0.0).exp();
            }
        }
    }
    fold_diagonal(&mut p);
    TransitionMatrix { p }
}

/// Independent MTMK kernel with `k` trials, by summing the literal
/// algorithm over every trial tuple in `S^k`. Cost `O(|S|^{k+1} k)`.
pub fn build_mtmk_matrix(space: &TruncatedStateSpace, k: usize) -> Result<TransitionMatrix> {
    if k == 0 {
        return Err(LatticeError::Domain("trial count k must be >= 1".into()));
    }
    let n = space.len();
    let tuples = (n as u64)
        .checked_pow(k as u32)
        .filter(|t| t.saturating_mul(n as u64) <= 1 << 32);
    let Some(tuples) = tuples else {
        return Err(LatticeError::Capacity { cap: 1 << 32 });
    };
    let m = space
        .log_w
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = space.log_w.iter().map(|l| (l - m).exp()).collect();
    let mut p = DMatrix::zeros(n, n);
    let mut idx = vec![0usize; k];
    for _ in 0..tuples {
        let prob: f64 = idx.iter().map(|&j| space.q[j]).product();
        let total: f64 = idx.iter().map(|&j| w[j]).sum();
        for a in 0..n {
            for &yc in &idx {
                let sel = w[yc] / total;
                let acc = (total / (w[a] + total - w[yc])).min(1.0);
                p[(a, yc)] += prob * sel * acc;
            }
        }
        // odometer increment
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < n {
                break;
            }
            *slot = 0;
        }
    }
    fold_diagonal(&mut p);
    Ok(TransitionMatrix { p })
}

/// Stationary acceptance rate of MHK: `Σ_x π(x) Σ_y q(y) min{1, w(y)/w(x)}`.
pub fn mhk_acceptance_rate(space: &TruncatedStateSpace) -> f64 {
    let n = space.len();
    (0..n)
        .map(|i| {
            space.pi[i]
                * (0..n)
                    .map(|j| space.q[j] * (space.log_w[j] - space.log_w[i]).min(0.0).exp())
                    .sum::<f64>()
        })
        .sum()
}

/// Rejection masses `P(x_j, x_j) − q(x_j)`; on the sorted space these are
/// the non-unit eigenvalues of the MHK kernel.
pub fn rejection_masses(p: &TransitionMatrix, space: &TruncatedStateSpace) -> Vec<f64> {
    (0..space.len()).map(|j| p.p[(j, j)] - space.q[j]).collect()
}

/// Second-largest eigenvalue magnitude of `P` and the closed-form
/// prediction `1 − q(x₁)/π(x₁)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralReport {
    pub tau1: f64,
    pub predicted: f64,
}

impl SpectralReport {
    pub fn residual(&self) -> f64 {
        (self.tau1 - self.predicted).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenMethod {
    Auto,
    Dense,
    Power,
}

/// Symmetrized kernel `D^{1/2} P D^{−1/2}` with the stationary direction
/// `√π` projected out.
fn deflated_symmetric(p: &TransitionMatrix, pi: &[f64]) -> DMatrix<f64> {
    let n = p.len();
    let sq: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let mut s = DMatrix::from_fn(n, n, |i, j| sq[i] * p.p[(i, j)] / sq[j]);
    s = (&s + s.transpose()) * 0.5;
    let v = DVector::from_vec(sq);
    s - &v * v.transpose()
}

/// Largest eigenvalue magnitude of `P` once the unit eigenvalue is removed.
/// Requires `P` reversible with respect to `pi`.
pub fn second_eigenvalue(p: &TransitionMatrix, pi: &[f64], method: EigenMethod) -> Result<f64> {
    if pi.len() != p.len() {
        return Err(LatticeError::Dimension {
            expected: p.len(),
            got: pi.len(),
        });
    }
    let s = deflated_symmetric(p, pi);
    let dense = match method {
        EigenMethod::Auto => p.len() <= DENSE_EIGEN_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Power => false,
    };
    if dense {
        let eig = SymmetricEigen::new(s);
        return Ok(eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }
    power_iteration(&s)
}

fn power_iteration(s: &DMatrix<f64>) -> Result<f64> {
    let n = s.nrows();
    // fixed, non-degenerate start vector
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut prev = f64::INFINITY;
    for _ in 0..POWER_MAX_ITERS {
        // iterate on S² so that ±λ pairs do not oscillate
        let w = s * (s * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let lambda = norm.sqrt();
        v = w / norm;
        if (lambda - prev).abs() <= 1e-14 * lambda.max(1e-300) {
            return Ok(lambda);
        }
        prev = lambda;
    }
    Err(LatticeError::Numerical(format!(
        "power iteration did not converge in {POWER_MAX_ITERS} iterations"
    )))
}

pub fn spectral_radius_check(
    p: &TransitionMatrix,
    space: &TruncatedStateSpace,
) -> Result<SpectralReport> {
    let tau1 = second_eigenvalue(p, &space.pi, EigenMethod::Auto)?;
    let predicted = 1.0 - space.q[0] / space.pi[0];
    Ok(SpectralReport { tau1, predicted })
}

/// `½ Σ |p_i − q_i|`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(LatticeError::Dimension {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `t_mix(ε) = ln ε / ln(1 − δ)` and its upper bound `−ln ε / δ`.
pub fn mixing_time_bound(delta: f64, eps: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LatticeError::Domain(format!(
            "delta must be in (0,1), got {delta}"
        )));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LatticeError::Domain(format!(
            "eps must be in (0,1), got {eps}"
        )));
    }
    let exact = eps.ln() / (-delta).ln_1p();
    Ok((exact, -eps.ln() / delta))
}

/// `TV(P^t(x, ·), π)` for `t = 1..=t_max`, starting from state `start`.
pub fn exact_tv_trace(
    p: &TransitionMatrix,
    pi: &[f64],
    start: usize,
    t_max: usize,
) -> Result<Vec<f64>> {
    if start >= p.len() {
        return Err(LatticeError::Domain(format!(
            "start index {start} outside {} states",
            p.len()
        )));
    }
    let mut dist = vec![0.0; p.len()];
    dist[start] = 1.0;
    let mut out = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        dist = p.step_distribution(&dist);
        out.push(tv_distance(&dist, pi)?);
    }
    Ok(out)
}
