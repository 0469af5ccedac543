//! Lattice bases, QR / Gram-Schmidt data, LLL reduction and exhaustive
//! enumeration oracles.
//!
//! A [`Basis`] stores the generator matrix `B` (columns are basis vectors)
//! together with its QR factors. The diagonal of `R` is forced positive, so
//! `r_ii` is exactly the Gram-Schmidt norm of the i-th basis vector.
//!
//! All integer vectors are coefficient vectors with respect to the columns of
//! `B`; the lattice point they describe is `B x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{LatticeError, Result};

/// Default cap on nodes visited by [`enumerate_ball`].
pub const DEFAULT_ENUM_CAP: u64 = 10_000_000;

/// Default LLL parameter.
pub const DEFAULT_KAPPA: f64 = 0.75;

/// Full-rank square lattice basis with cached QR factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    gs_norms: Vec<f64>,
}

/// Parameters of a lattice Gaussian: standard deviation and center.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSpec {
    pub sigma: f64,
    pub center: DVector<f64>,
}

impl GaussianSpec {
    pub fn new(sigma: f64, center: DVector<f64>) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(LatticeError::Domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(GaussianSpec { sigma, center })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Integer coefficient vector together with its embedding `B x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub x: Vec<i64>,
    pub embedded: DVector<f64>,
}

/// QR factorization of a square full-rank matrix with `r_ii > 0`.
pub fn qr_decompose(b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(LatticeError::Dimension {
            expected: n,
            got: b.ncols(),
        });
    }
    if n == 0 {
        return Err(LatticeError::Domain("empty basis".into()));
    }
    let qr = b.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let scale = b.norm();
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
        if !(r[(i, i)] > 1e-12 * scale) {
            return Err(LatticeError::SingularBasis {
                index: i,
                value: r[(i, i)],
            });
        }
    }
    Ok((q, r))
}

impl Basis {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        let (q, r) = qr_decompose(&b)?;
        let gs_norms = (0..b.nrows()).map(|i| r[(i, i)]).collect();
        Ok(Basis { b, q, r, gs_norms })
    }

    /// Builds a basis from row-major entries: `rows[i][j]` is `b_{i,j}`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        for row in rows {
            if row.as_ref().len() != n {
                return Err(LatticeError::Dimension {
                    expected: n,
                    got: row.as_ref().len(),
                });
            }
        }
        Basis::new(DMatrix::from_fn(n, n, |i, j| rows[i].as_ref()[j]))
    }

    pub fn identity(n: usize) -> Self {
        Basis::new(DMatrix::identity(n, n)).expect("identity is full rank")
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn gs_norms(&self) -> &[f64] {
        &self.gs_norms
    }

    pub fn min_gs_norm(&self) -> f64 {
        self.gs_norms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_gs_norm(&self) -> f64 {
        self.gs_norms.iter().copied().fold(0.0, f64::max)
    }

    /// `B x`.
    pub fn embed(&self, x: &[i64]) -> DVector<f64> {
        assert_eq!(x.len(), self.dim());
        let xf = DVector::from_iterator(x.len(), x.iter().map(|&v| v as f64));
        &self.b * xf
    }

    pub fn point(&self, x: Vec<i64>) -> LatticePoint {
        let embedded = self.embed(&x);
        LatticePoint { x, embedded }
    }

    /// `Qᵀ c`.
    pub fn rotate(&self, c: &DVector<f64>) -> DVector<f64> {
        self.q.tr_mul(c)
    }

    /// `‖B x − c‖²`, evaluated directly on the basis matrix.
    pub fn dist_sq(&self, x: &[i64], c: &DVector<f64>) -> f64 {
        (self.embed(x) - c).norm_squared()
    }

    /// Basis of the same lattice after the unimodular change `B U`.
    pub fn transformed(&self, u: &DMatrix<i64>) -> Result<Basis> {
        let uf = u.map(|v| v as f64);
        Basis::new(&self.b * uf)
    }

    pub fn scaled(&self, factor: f64) -> Result<Basis> {
        Basis::new(&self.b * factor)
    }

    /// Plain-text form: a line with `n`, then `n` rows of `n` decimals.
    pub fn to_text(&self) -> String {
        let n = self.dim();
        let mut out = format!("{n}\n");
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{}", self.b[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Basis> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| LatticeError::Parse("empty basis file".into()))?;
        let n: usize = header
            .parse()
            .map_err(|_| LatticeError::Parse(format!("bad dimension line {header:?}")))?;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| LatticeError::Parse(format!("missing row {}", i + 1)))?;
            let row: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse).collect();
            let row =
                row.map_err(|_| LatticeError::Parse(format!("bad number in row {}", i + 1)))?;
            if row.len() != n {
                return Err(LatticeError::Parse(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            rows.push(row);
        }
        if lines.next().is_some() {
            return Err(LatticeError::Parse("trailing data after basis rows".into()));
        }
        Basis::from_rows(&rows)
    }
}

/// LLL reduction with Lovász parameter `kappa`.
///
/// Works on the triangular factor directly: size reduction subtracts integer
/// multiples of earlier columns, and a failed Lovász test swaps two adjacent
/// columns followed by a Givens rotation that restores triangularity.
/// Returns the reduced basis `B U` and the unimodular `U`.
pub fn lll_reduce(basis: &Basis, kappa: f64) -> Result<(Basis, DMatrix<i64>)> {
    if !(0.25..=1.0).contains(&kappa) {
        return Err(LatticeError::Domain(format!(
            "kappa must lie in [1/4, 1], got {kappa}"
        )));
    }
    let n = basis.dim();
    let mut r = basis.r().clone();
    let mut u = DMatrix::<i64>::identity(n, n);
    let max_iter = 100_000usize.saturating_mul(n * n).max(1_000);
    let mut iter = 0usize;
    let mut k = 1usize;
    while k < n {
        iter += 1;
        if iter > max_iter {
            return Err(LatticeError::Numerical("LLL did not terminate".into()));
        }
        for j in (0..k).rev() {
            let mu = (r[(j, k)] / r[(j, j)]).round();
            if mu != 0.0 {
                for row in 0..=j {
                    r[(row, k)] -= mu * r[(row, j)];
                }
                let m = mu as i64;
                for row in 0..n {
                    u[(row, k)] -= m * u[(row, j)];
                }
            }
        }
        let lhs = kappa * r[(k - 1, k - 1)].powi(2);
        let rhs = r[(k - 1, k)].powi(2) + r[(k, k)].powi(2);
        if lhs > rhs {
            r.swap_columns(k - 1, k);
            u.swap_columns(k - 1, k);
            let a = r[(k - 1, k - 1)];
            let b = r[(k, k - 1)];
            let h = a.hypot(b);
            let (cs, sn) = (a / h, b / h);
            for col in (k - 1)..n {
                let t1 = r[(k - 1, col)];
                let t2 = r[(k, col)];
                r[(k - 1, col)] = cs * t1 + sn * t2;
                r[(k, col)] = -sn * t1 + cs * t2;
            }
            r[(k, k - 1)] = 0.0;
            k = (k - 1).max(1);
        } else {
            k += 1;
        }
    }
    let reduced = basis.transformed(&u)?;
    Ok((reduced, u))
}

/// Checks size reduction `|μ_{i,j}| ≤ 1/2` and the Lovász condition, with
/// tolerance 1e-9.
pub fn is_lll_reduced(basis: &Basis, kappa: f64) -> bool {
    let r = basis.r();
    let n = basis.dim();
    const TOL: f64 = 1e-9;
    for i in 0..n {
        for j in 0..i {
            if (r[(j, i)] / r[(j, j)]).abs() > 0.5 + TOL {
                return false;
            }
        }
    }
    for i in 0..n.saturating_sub(1) {
        let lhs = kappa * r[(i, i)].powi(2);
        let rhs = r[(i, i + 1)].powi(2) + r[(i + 1, i + 1)].powi(2);
        if lhs > rhs + TOL * lhs.max(1.0) {
            return false;
        }
    }
    true
}

/// All lattice points with `‖B x − c‖ ≤ radius`, sorted lexicographically by `x`.
pub fn enumerate_ball(basis: &Basis, c: &DVector<f64>, radius: f64) -> Result<Vec<LatticePoint>> {
    enumerate_ball_with_cap(basis, c, radius, DEFAULT_ENUM_CAP)
}

pub fn enumerate_ball_with_cap(
    basis: &Basis,
    c: &DVector<f64>,
    radius: f64,
    cap: u64,
) -> Result<Vec<LatticePoint>> {
    let n = basis.dim();
    if c.len() != n {
        return Err(LatticeError::Dimension {
            expected: n,
            got: c.len(),
        });
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(LatticeError::Domain(format!(
            "radius must be finite and non-negative, got {radius}"
        )));
    }
    let mut walker = BallWalker {
        r: basis.r(),
        cp: basis.rotate(c),
        bound: radius * radius * (1.0 + 1e-12) + 1e-15,
        x: vec![0; n],
        visited: 0,
        cap,
        found: Vec::new(),
    };
    walker.descend(n - 1, 0.0)?;
    let mut found = walker.found;
    found.sort();
    let limit = radius * radius * (1.0 + 1e-12) + 1e-15;
    Ok(found
        .into_iter()
        .map(|x| basis.point(x))
        .filter(|p| (&p.embedded - c).norm_squared() <= limit)
        .collect())
}

struct BallWalker<'a> {
    r: &'a DMatrix<f64>,
    cp: DVector<f64>,
    bound: f64,
    x: Vec<i64>,
    visited: u64,
    cap: u64,
    found: Vec<Vec<i64>>,
}

impl BallWalker<'_> {
    fn descend(&mut self, level: usize, partial: f64) -> Result<()> {
        let n = self.x.len();
        let rii = self.r[(level, level)];
        let mut acc = self.cp[level];
        for j in (level + 1)..n {
            acc -= self.r[(level, j)] * self.x[j] as f64;
        }
        let center = acc / rii;
        let rem = self.bound - partial;
        if rem < 0.0 {
            return Ok(());
        }
        let half = rem.sqrt() / rii;
        let lo = (center - half).ceil() as i64;
        let hi = (center + half).floor() as i64;
        for xi in lo..=hi {
            self.visited += 1;
            if self.visited > self.cap {
                return Err(LatticeError::Capacity { cap: self.cap });
            }
            let d = rii * (xi as f64 - center);
            let p = partial + d * d;
            if p > self.bound {
                continue;
            }
            self.x[level] = xi;
            if level == 0 {
                self.found.push(self.x.clone());
            } else {
                self.descend(level - 1, p)?;
            }
        }
        self.x[level] = 0;
        Ok(())
    }
}

/// Nearest-plane rounding: back substitution on `R` with rounding at each level.
pub fn babai_round(basis: &Basis, c: &DVector<f64>) -> LatticePoint {
    let n = basis.dim();
    let r = basis.r();
    let cp = basis.rotate(c);
    let mut x = vec![0i64; n];
    for i in (0..n).rev() {
        let mut acc = cp[i];
        for j in (i + 1)..n {
            acc -= r[(i, j)] * x[j] as f64;
        }
        x[i] = (acc / r[(i, i)]).round() as i64;
    }
    basis.point(x)
}

/// Exact closest vector, ties broken towards the lexicographically smallest `x`.
pub fn cvp_bruteforce(basis: &Basis, c: &DVector<f64>) -> Result<LatticePoint> {
    cvp_bruteforce_with_cap(basis, c, DEFAULT_ENUM_CAP)
}

pub fn cvp_bruteforce_with_cap(basis: &Basis, c: &DVector<f64>, cap: u64) -> Result<LatticePoint> {
    let start = babai_round(basis, c);
    let radius = (&start.embedded - c).norm();
    let points = enumerate_ball_with_cap(basis, c, radius, cap)?;
    let dists: Vec<f64> = points
        .iter()
        .map(|p| (&p.embedded - c).norm_squared())
        .collect();
    let best = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let tie = best * (1.0 + 1e-12) + 1e-15;
    // points are sorted lexicographically, so the first within tolerance wins
    let idx = dists.iter().position(|&d| d <= tie);
    Ok(match idx {
        Some(i) => points[i].clone(),
        None => start,
    })
}

/// Random integer basis with entries uniform in `[lo, hi]`, redrawn until
/// `|det B| ≥ 1` (integral matrices have integral determinants).
pub fn random_integer_basis<R: Rng + ?Sized>(
    n: usize,
    lo: i64,
    hi: i64,
    rng: &mut R,
) -> Result<Basis> {
    if lo > hi || n == 0 || (lo == 0 && hi == 0) {
        return Err(LatticeError::Domain(format!(
            "cannot draw a full-rank {n}x{n} basis from [{lo}, {hi}]"
        )));
    }
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(lo..=hi) as f64);
        if m.determinant().abs() > 0.5 {
            return Basis::new(m);
        }
    }
}
