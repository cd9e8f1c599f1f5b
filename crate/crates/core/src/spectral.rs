//! Spectral lifting of even potentials to rectangular matrices.
//!
//! A scalar function `f` acts on `X = U diag(sigma) V^T` through its
//! singular values: `F(X) = sum_i f(sigma_i)` and, for odd `f'`,
//! `grad F(X) = U diag(f'(sigma)) V^T`. The spectral hypentropy update
//! (SHU) maps the iterate to the dual with `asinh`, takes a gradient step
//! and maps back with `beta sinh`, both through thin SVDs.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::potentials::{asinh_stable, HypentropyParams, Potential, DUAL_LIMIT};
use crate::projections::{euclidean_project, project, ConstraintSet, RootFindConfig};

/// Thin SVD factors: `u` is `m x l`, `v` is `n x l`, `sigma` nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn recompose(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// `U diag(values) V^T`.
    pub fn with_values(&self, values: &[f64]) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// Thin SVD with singular values sorted nonincreasing.
///
/// One-sided Jacobi on the taller orientation: columns are rotated until
/// pairwise orthogonal, their norms are the singular values. Columns of `U`
/// belonging to (numerically) zero singular values are completed to an
/// orthonormal set.
pub fn thin_svd(x: &DMatrix<f64>) -> Result<SvdFactors> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("SVD of a matrix with non-finite entries".into()));
    }
    if x.nrows() < x.ncols() {
        let t = thin_svd(&x.transpose())?;
        return Ok(SvdFactors { u: t.v, sigma: t.sigma, v: t.u });
    }
    let (m, n) = x.shape();
    let mut a = x.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = f64::EPSILON * m as f64;
    let frobenius = x.norm();
    let mut converged = n < 2;
    let mut worst = 0.0;
    for _ in 0..JACOBI_SWEEPS {
        worst = 0.0_f64;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                // columns far below the matrix scale are numerically zero
                if gamma == 0.0 || alpha.min(beta).sqrt() <= NEGLIGIBLE * frobenius {
                    continue;
                }
                let ratio = gamma.abs() / (alpha.sqrt() * beta.sqrt());
                worst = worst.max(ratio);
                if ratio <= tol {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if worst <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical { context: "Jacobi SVD".into(), residual: worst });
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let top = norms[order[0]];
    let mut u = DMatrix::<f64>::zeros(m, n);
    let mut vs = DMatrix::<f64>::zeros(n, n);
    let mut sigma = DVector::<f64>::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        vs.set_column(k, &v.column(j));
        if norms[j] > top * 1e-13 && norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
        } else {
            let col = orthonormal_complement(&u, k);
            u.set_column(k, &col);
        }
    }
    Ok(SvdFactors { u, sigma, v: vs })
}

const JACOBI_SWEEPS: usize = 80;
const NEGLIGIBLE: f64 = 1e-18;

fn rotate(a: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.nrows() {
        let ap = a[(i, p)];
        let aq = a[(i, q)];
        a[(i, p)] = c * ap - s * aq;
        a[(i, q)] = s * ap + c * aq;
    }
}

/// A unit vector orthogonal to the first `k` columns of `u`.
fn orthonormal_complement(u: &DMatrix<f64>, k: usize) -> DVector<f64> {
    let m = u.nrows();
    let mut best = DVector::zeros(m);
    let mut best_norm = -1.0;
    for e in 0..m {
        let mut c = DVector::<f64>::zeros(m);
        c[e] = 1.0;
        for _ in 0..2 {
            for j in 0..k {
                let proj = u.column(j).dot(&c);
                c -= u.column(j) * proj;
            }
        }
        let norm = c.norm();
        if norm > best_norm {
            best_norm = norm;
            best = c;
        }
        if norm > 0.5 {
            break;
        }
    }
    best / best_norm
}

/// A primal matrix iterate with an optional SVD computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    svd: Option<SvdFactors>,
}

impl WeightMatrix {
    /// Wraps `entries` without factorizing it.
    pub fn new(entries: DMatrix<f64>) -> Self {
        Self { entries, svd: None }
    }

    /// Wraps `entries` together with its thin SVD.
    pub fn decomposed(entries: DMatrix<f64>) -> Result<Self> {
        let svd = thin_svd(&entries)?;
        Ok(Self { entries, svd: Some(svd) })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self::new(DMatrix::zeros(m, n))
    }

    /// `U diag(sigma) V^T`; the factors are kept as the cache when `sigma`
    /// is nonnegative and nonincreasing.
    pub fn from_factors(u: DMatrix<f64>, sigma: DVector<f64>, v: DMatrix<f64>) -> Self {
        let factors = SvdFactors { u, sigma, v };
        let entries = factors.recompose();
        let ordered = factors.sigma.iter().all(|s| *s >= 0.0)
            && factors.sigma.as_slice().windows(2).all(|w| w[0] >= w[1]);
        Self { entries, svd: ordered.then_some(factors) }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn cached_svd(&self) -> Option<&SvdFactors> {
        self.svd.as_ref()
    }

    /// The cached factors, or a fresh decomposition.
    pub fn svd(&self) -> Result<Cow<'_, SvdFactors>> {
        match &self.svd {
            Some(f) => Ok(Cow::Borrowed(f)),
            None => thin_svd(&self.entries).map(Cow::Owned),
        }
    }

    pub fn singular_values(&self) -> Result<Vec<f64>> {
        Ok(self.svd()?.sigma.iter().copied().collect())
    }

    pub fn trace_norm(&self) -> Result<f64> {
        Ok(self.svd()?.sigma.iter().sum())
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        Ok(self.svd()?.sigma.iter().copied().fold(0.0, f64::max))
    }
}

/// An even scalar potential lifted to `m x n` matrices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPotential {
    scalar: Potential,
    m: usize,
    n: usize,
}

impl SpectralPotential {
    pub fn new(scalar: Potential, m: usize, n: usize) -> Result<Self> {
        if !scalar.is_even() {
            return Err(Error::Parameter(format!(
                "{} is not even and cannot act on singular values",
                scalar.name()
            )));
        }
        if m == 0 || n == 0 {
            return Err(Error::Parameter("matrix dimensions must be positive".into()));
        }
        Ok(Self { scalar, m, n })
    }

    pub fn scalar(&self) -> &Potential {
        &self.scalar
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.shape() == (self.m, self.n) {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: format!("{}x{}", self.m, self.n),
                found: format!("{}x{}", x.nrows(), x.ncols()),
            })
        }
    }
}

/// `sum_i f(sigma_i(X))`.
pub fn spectral_value(pot: &SpectralPotential, x: &WeightMatrix) -> Result<f64> {
    pot.check(x.entries())?;
    let svd = x.svd()?;
    pot.scalar.value(svd.sigma.as_slice())
}

/// `U diag(f'(sigma)) V^T`.
pub fn spectral_grad(pot: &SpectralPotential, x: &WeightMatrix) -> Result<WeightMatrix> {
    pot.check(x.entries())?;
    let svd = x.svd()?;
    let g = pot.scalar.grad(svd.sigma.as_slice())?;
    Ok(WeightMatrix::from_factors(svd.u.clone(), DVector::from_vec(g), svd.v.clone()))
}

/// Bregman divergence of the lifted potential.
pub fn spectral_div(pot: &SpectralPotential, x: &WeightMatrix, y: &WeightMatrix) -> Result<f64> {
    let grad = spectral_grad(pot, y)?;
    let diff = x.entries() - y.entries();
    Ok(spectral_value(pot, x)? - spectral_value(pot, y)? - grad.entries().dot(&diff))
}

/// Spectral hypentropy update `beta sinh(asinh(X/beta) - eta G)`.
///
/// Two decompositions per call: the cached (or fresh) SVD of `X` for the
/// `asinh` lift and a fresh SVD of the dual iterate for the `sinh` lift,
/// each `O(m n min(m, n))`. The result carries the second one as its cache.
pub fn shu_step(
    x: &WeightMatrix,
    g: &DMatrix<f64>,
    eta: f64,
    params: &HypentropyParams,
) -> Result<WeightMatrix> {
    if x.entries().shape() != g.shape() {
        return Err(Error::Shape {
            expected: format!("{}x{}", x.nrows(), x.ncols()),
            found: format!("{}x{}", g.nrows(), g.ncols()),
        });
    }
    let beta = params.beta();
    let svd = x.svd()?;
    let dual_sigma: Vec<f64> = svd.sigma.iter().map(|s| asinh_stable(s / beta)).collect();
    let dual = svd.with_values(&dual_sigma) - g * eta;
    let next = thin_svd(&dual)?;
    if let Some(index) = next.sigma.iter().position(|s| *s > DUAL_LIMIT) {
        return Err(Error::Overflow { index, value: next.sigma[index], limit: DUAL_LIMIT });
    }
    let sigma = next.sigma.map(|s| beta * s.sinh());
    Ok(WeightMatrix::from_factors(next.u, sigma, next.v))
}

/// Hypentropy projection onto the trace-norm ball of radius `tau`:
/// the singular values are projected onto the 1-ball, the singular vectors
/// are kept.
pub fn project_trace_ball(
    x: &WeightMatrix,
    tau: f64,
    params: &HypentropyParams,
    cfg: &RootFindConfig,
) -> Result<WeightMatrix> {
    trace_ball(x, tau, |sigma| {
        project(&Potential::Hypentropy(*params), &ConstraintSet::L1Ball(tau), sigma, cfg)
    })
}

/// Frobenius projection onto the trace-norm ball (soft-thresholded singular
/// values), used by projected gradient descent.
pub fn euclidean_project_trace_ball(x: &WeightMatrix, tau: f64) -> Result<WeightMatrix> {
    trace_ball(x, tau, |sigma| euclidean_project(&ConstraintSet::L1Ball(tau), sigma))
}

fn trace_ball(
    x: &WeightMatrix,
    tau: f64,
    shrink: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<WeightMatrix> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Parameter(format!("trace-ball radius must be > 0, got {tau}")));
    }
    let svd = x.svd()?;
    if svd.sigma.iter().sum::<f64>() <= tau {
        return Ok(x.clone());
    }
    let sigma = shrink(svd.sigma.as_slice())?;
    Ok(WeightMatrix::from_factors(svd.u.clone(), DVector::from_vec(sigma), svd.v.clone()))
}

/// `[[0, X], [X^T, 0]]`, whose eigenvalues are `+-sigma(X)` padded with zeros.
pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = x.shape();
    let mut s = DMatrix::zeros(m + n, m + n);
    s.view_mut((0, m), (m, n)).copy_from(x);
    s.view_mut((m, 0), (n, m)).copy_from(&x.transpose());
    s
}

/// `sum_i f(lambda_i(S))` for symmetric `S`.
pub fn eigen_trace_function(s: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> f64 {
    let eig = SymmetricEigen::new(s.clone());
    eig.eigenvalues.iter().map(|&l| f(l)).sum()
}

/// Outcome of sampling the trace-norm strong convexity inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongConvexityReport {
    pub modulus: f64,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `D(X||Y) - mu/2 ||X - Y||_1^2` observed.
    pub min_slack: f64,
}

/// Samples pairs in the trace ball `B(tau)` of `m x n` matrices and checks
/// `D(X||Y) >= mu/2 ||X - Y||_1^2` with `mu = 1 / (2 (tau + beta min(m, n)))`.
pub fn check_spectral_strong_convexity(
    tau: f64,
    beta: f64,
    m: usize,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<StrongConvexityReport> {
    let params = HypentropyParams::new(beta)?;
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("tau must be > 0, got {tau}")));
    }
    let pot = SpectralPotential::new(Potential::Hypentropy(params), m, n)?;
    let modulus = 1.0 / (2.0 * (tau + beta * m.min(n) as f64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = StrongConvexityReport { modulus, samples, violations: 0, min_slack: f64::INFINITY };
    for i in 0..samples {
        let x = random_trace_ball_point(&mut rng, m, n, tau);
        let y = if i % 50 == 0 { x.clone() } else { random_trace_ball_point(&mut rng, m, n, tau) };
        let x = WeightMatrix::decomposed(x)?;
        let y = WeightMatrix::decomposed(y)?;
        let div = spectral_div(&pot, &x, &y)?;
        let gap = WeightMatrix::new(x.entries() - y.entries()).trace_norm()?;
        let slack = div - 0.5 * modulus * gap * gap;
        let scale = 1.0 + spectral_value(&pot, &x)?.abs() + spectral_value(&pot, &y)?.abs();
        if slack < -1e-12 * scale {
            report.violations += 1;
        }
        report.min_slack = report.min_slack.min(slack);
    }
    Ok(report)
}

/// A random matrix of random rank with trace norm uniform in `[0, tau]`.
pub fn random_trace_ball_point<R: Rng>(rng: &mut R, m: usize, n: usize, tau: f64) -> DMatrix<f64> {
    let l = m.min(n);
    let rank = rng.random_range(1..=l);
    let a = DMatrix::<f64>::from_fn(m, rank, |_, _| rng.sample(StandardNormal));
    let b = DMatrix::<f64>::from_fn(rank, n, |_, _| rng.sample(StandardNormal));
    let x = a * b;
    let norm = WeightMatrix::new(x.clone()).trace_norm().unwrap_or(1.0);
    let radius = tau * rng.random::<f64>();
    if norm == 0.0 {
        x
    } else {
        x * (radius / norm)
    }
}

/// `sum_i beta cosh(sigma_i(Z))`, the conjugate of the spectral hypentropy.
pub fn spectral_conjugate(z: &WeightMatrix, params: &HypentropyParams) -> Result<f64> {
    let sigma = z.singular_values()?;
    crate::potentials::hyp_conjugate(&sigma, params)
}
