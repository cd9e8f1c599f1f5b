//! Separable potentials and their Bregman divergences.
//!
//! The hyperbolic entropy ("hypentropy")
//!
//! ```text
//! phi_beta(x) = sum_i x_i asinh(x_i / beta) - sqrt(x_i^2 + beta^2)
//! ```
//!
//! has mirror map `asinh(x / beta)`, inverse mirror map `beta sinh(z)` and
//! Fenchel conjugate `beta cosh(z)`. Its Hessian `1 / sqrt(x^2 + beta^2)` is
//! nearly constant for `beta >> |x|` (gradient descent geometry) and close
//! to `1 / |x|` for `beta << |x|` (exponentiated gradient geometry).
//!
//! The squared Euclidean norm, the negative entropy and the squared p-norm
//! are provided next to it as baselines.

use crate::error::{check_len, Error, Result};

/// Largest dual coordinate accepted by `sinh`/`cosh` based maps.
///
/// `exp(710)` overflows an `f64`; anything past 700 is rejected instead of
/// saturated.
pub const DUAL_LIMIT: f64 = 700.0;

/// Temperature of the hypentropy potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypentropyParams {
    beta: f64,
}

impl HypentropyParams {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 {
            Ok(Self { beta })
        } else {
            Err(Error::Parameter(format!(
                "hypentropy beta must be finite and > 0, got {beta}"
            )))
        }
    }

    #[inline]
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Exponent pair of the squared p-norm potential, `1/p + 1/q = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PNormParams {
    p: f64,
    q: f64,
}

impl PNormParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(Error::Parameter(format!("p-norm exponent must be >= 2, got {p}")));
        }
        Ok(Self { p, q: p / (p - 1.0) })
    }

    /// `p = 2 ln(dim)`, floored at 2.
    pub fn for_dimension(dim: usize) -> Self {
        let p = (2.0 * (dim.max(1) as f64).ln()).max(2.0);
        Self { p, q: p / (p - 1.0) }
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }
}

/// A strictly convex potential used as a mirror-descent regularizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Hypentropy(HypentropyParams),
    SquaredEuclidean,
    /// `sum x log x - x` on the nonnegative orthant.
    Entropy,
    /// `0.5 ||x||_p^2`.
    PNorm(PNormParams),
}

impl Potential {
    pub fn hypentropy(beta: f64) -> Result<Self> {
        HypentropyParams::new(beta).map(Potential::Hypentropy)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Hypentropy(_) => "hypentropy",
            Potential::SquaredEuclidean => "squared-euclidean",
            Potential::Entropy => "entropy",
            Potential::PNorm(_) => "p-norm",
        }
    }

    /// True when `value` is even in every coordinate, which is what lifting
    /// to singular values requires.
    pub fn is_even(&self) -> bool {
        !matches!(self, Potential::Entropy)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_finite(x)?;
        match self {
            Potential::Hypentropy(params) => hyp_value(x, params),
            Potential::SquaredEuclidean => Ok(0.5 * dot(x, x)),
            Potential::Entropy => {
                check_nonnegative(x)?;
                Ok(x.iter().map(|&v| xlogx(v) - v).sum())
            }
            Potential::PNorm(params) => {
                let n = lp_norm(x, params.p);
                Ok(0.5 * n * n)
            }
        }
    }

    /// Mirror map.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_finite(x)?;
        match self {
            Potential::Hypentropy(params) => hyp_grad(x, params),
            Potential::SquaredEuclidean => Ok(x.to_vec()),
            Potential::Entropy => {
                if let Some(i) = x.iter().position(|&v| v <= 0.0) {
                    return Err(Error::Domain(format!(
                        "entropy gradient needs positive coordinates, x[{i}] = {}",
                        x[i]
                    )));
                }
                Ok(x.iter().map(|v| v.ln()).collect())
            }
            Potential::PNorm(params) => Ok(pnorm_mirror(x, params)),
        }
    }

    /// Inverse mirror map.
    pub fn grad_inv(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_finite(z)?;
        match self {
            Potential::Hypentropy(params) => hyp_grad_inv(z, params),
            Potential::SquaredEuclidean => Ok(z.to_vec()),
            Potential::Entropy => {
                guard_dual(z)?;
                Ok(z.iter().map(|v| v.exp()).collect())
            }
            Potential::PNorm(params) => Ok(pnorm_mirror_inv(z, params)),
        }
    }

    /// Diagonal of the Hessian. For the separable potentials this is the
    /// whole Hessian.
    pub fn second_deriv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_finite(x)?;
        match self {
            Potential::Hypentropy(params) => hyp_second_deriv(x, params),
            Potential::SquaredEuclidean => Ok(vec![1.0; x.len()]),
            Potential::Entropy => {
                if x.iter().any(|&v| v <= 0.0) {
                    return Err(Error::Domain("entropy Hessian needs positive coordinates".into()));
                }
                Ok(x.iter().map(|v| 1.0 / v).collect())
            }
            Potential::PNorm(params) => {
                let p = params.p;
                let n = lp_norm(x, p);
                if n == 0.0 {
                    return Ok(vec![if p == 2.0 { 1.0 } else { 0.0 }; x.len()]);
                }
                Ok(x
                    .iter()
                    .map(|v| {
                        let r = v.abs() / n;
                        (p - 1.0) * r.powf(p - 2.0) - (p - 2.0) * r.powf(2.0 * p - 2.0)
                    })
                    .collect())
            }
        }
    }
}

/// `asinh` through its logarithmic form.
///
/// Uses `log1p` near the origin and `ln(2|z|) + 1/(4 z^2)` once `z^2 + 1`
/// is no longer representable distinctly from `z^2`.
pub fn asinh_stable(z: f64) -> f64 {
    let a = z.abs();
    let r = if a > 1e8 {
        std::f64::consts::LN_2 + a.ln() + 0.25 / (a * a)
    } else {
        // log(a + sqrt(a^2+1)) = log1p(a + a^2 / (1 + sqrt(a^2+1)))
        (a + a * a / (1.0 + (a * a + 1.0).sqrt())).ln_1p()
    };
    r.copysign(z)
}

/// Scalar hypentropy `x asinh(x/beta) - sqrt(x^2 + beta^2)`.
#[inline]
pub fn hyp_scalar(x: f64, beta: f64) -> f64 {
    x * asinh_stable(x / beta) - x.hypot(beta)
}

pub fn hyp_value(x: &[f64], params: &HypentropyParams) -> Result<f64> {
    check_finite(x)?;
    Ok(x.iter().map(|&v| hyp_scalar(v, params.beta)).sum())
}

pub fn hyp_grad(x: &[f64], params: &HypentropyParams) -> Result<Vec<f64>> {
    check_finite(x)?;
    Ok(x.iter().map(|&v| asinh_stable(v / params.beta)).collect())
}

/// `beta sinh(z)`, coordinatewise, refusing `|z| > DUAL_LIMIT`.
pub fn hyp_grad_inv(z: &[f64], params: &HypentropyParams) -> Result<Vec<f64>> {
    check_finite(z)?;
    guard_dual(z)?;
    Ok(z.iter().map(|&v| params.beta * v.sinh()).collect())
}

pub fn hyp_second_deriv(x: &[f64], params: &HypentropyParams) -> Result<Vec<f64>> {
    check_finite(x)?;
    Ok(x.iter().map(|&v| 1.0 / v.hypot(params.beta)).collect())
}

/// Fenchel conjugate `sum_i beta cosh(z_i)`.
///
/// With the hypentropy normalized as above this is the exact conjugate:
/// `phi(0) + phi*(0) = -beta + beta = 0`.
pub fn hyp_conjugate(z: &[f64], params: &HypentropyParams) -> Result<f64> {
    check_finite(z)?;
    guard_dual(z)?;
    Ok(z.iter().map(|&v| params.beta * v.cosh()).sum())
}

/// Bregman divergence `D(x || y) = phi(x) - phi(y) - <grad phi(y), x - y>`.
///
/// Separable potentials use the per-coordinate closed forms, which avoid
/// subtracting large potential values.
pub fn bregman_div(pot: &Potential, x: &[f64], y: &[f64]) -> Result<f64> {
    check_len(x.len(), y.len())?;
    check_finite(x)?;
    check_finite(y)?;
    match pot {
        Potential::Hypentropy(params) => {
            let b = params.beta;
            Ok(x.iter()
                .zip(y)
                .map(|(&xi, &yi)| {
                    xi * (asinh_stable(xi / b) - asinh_stable(yi / b)) - xi.hypot(b) + yi.hypot(b)
                })
                .sum())
        }
        Potential::SquaredEuclidean => {
            Ok(0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        }
        Potential::Entropy => {
            check_nonnegative(x)?;
            if let Some(i) = y.iter().position(|&v| v <= 0.0) {
                return Err(Error::Domain(format!(
                    "relative entropy needs y > 0, y[{i}] = {}",
                    y[i]
                )));
            }
            Ok(x.iter()
                .zip(y)
                .map(|(&xi, &yi)| {
                    let t = if xi == 0.0 { 0.0 } else { xi * (xi / yi).ln() };
                    t - xi + yi
                })
                .sum())
        }
        Potential::PNorm(params) => {
            let gy = pnorm_mirror(y, params);
            let nx = lp_norm(x, params.p);
            let ny = lp_norm(y, params.p);
            let inner: f64 = gy.iter().zip(x.iter().zip(y)).map(|(g, (a, b))| g * (a - b)).sum();
            Ok(0.5 * nx * nx - 0.5 * ny * ny - inner)
        }
    }
}

/// Mirror map of `0.5 ||w||_p^2`: `sign(w_i) |w_i|^(p-1) / ||w||_p^(p-2)`.
///
/// Degree-one homogeneous, so it is evaluated on `w / max|w_i|` to keep the
/// powers in range. Returns zero at the origin.
pub fn pnorm_mirror(w: &[f64], params: &PNormParams) -> Vec<f64> {
    pnorm_map(w, params.p)
}

/// Inverse of [`pnorm_mirror`]: the same map with the dual exponent `q`.
pub fn pnorm_mirror_inv(z: &[f64], params: &PNormParams) -> Vec<f64> {
    pnorm_map(z, params.q)
}

fn pnorm_map(w: &[f64], p: f64) -> Vec<f64> {
    let scale = w.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return vec![0.0; w.len()];
    }
    let n = lp_norm(w, p) / scale;
    let denom = n.powf(p - 2.0);
    w.iter()
        .map(|&v| {
            let r = v.abs() / scale;
            (scale * r.powf(p - 1.0) / denom).copysign(v)
        })
        .collect()
}

/// Sets over which closed-form diameters `sup_x D(x || 0)` are known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiameterSet {
    /// Unit 1-norm ball.
    B1,
    /// Unit 2-norm ball.
    B2,
    /// Trace-norm ball of the given radius (diameter taken over singular values).
    TraceBall(f64),
}

/// Upper bound on the diameter of `set` under `pot`.
///
/// Hypentropy: `2/beta` on `B2`, `log(3/beta)` on `B1` (needs `beta <= 1`),
/// `tau log(3 tau/beta)` on the trace ball (needs `beta <= tau`).
pub fn diameter_bound(pot: &Potential, set: DiameterSet) -> Result<f64> {
    match (pot, set) {
        (_, DiameterSet::TraceBall(tau)) if !(tau.is_finite() && tau > 0.0) => {
            Err(Error::Parameter(format!("trace-ball radius must be > 0, got {tau}")))
        }
        (Potential::Hypentropy(params), DiameterSet::B2) => Ok(2.0 / params.beta),
        (Potential::Hypentropy(params), DiameterSet::B1) => {
            if params.beta > 1.0 {
                return Err(Error::Parameter(format!(
                    "1-ball diameter bound needs beta <= 1, got {}",
                    params.beta
                )));
            }
            Ok((3.0 / params.beta).ln())
        }
        (Potential::Hypentropy(params), DiameterSet::TraceBall(tau)) => {
            if params.beta > tau {
                return Err(Error::Parameter(format!(
                    "trace-ball diameter bound needs beta <= tau, got beta = {} and tau = {tau}",
                    params.beta
                )));
            }
            Ok(tau * (3.0 * tau / params.beta).ln())
        }
        (Potential::SquaredEuclidean, DiameterSet::B1 | DiameterSet::B2) => Ok(0.5),
        (Potential::SquaredEuclidean, DiameterSet::TraceBall(tau)) => Ok(0.5 * tau * tau),
        (pot, set) => Err(Error::Unsupported(format!(
            "no diameter bound for {} over {set:?}",
            pot.name()
        ))),
    }
}

pub(crate) fn guard_dual(z: &[f64]) -> Result<()> {
    match z.iter().position(|v| v.abs() > DUAL_LIMIT) {
        Some(index) => Err(Error::Overflow { index, value: z[index], limit: DUAL_LIMIT }),
        None => Ok(()),
    }
}

pub(crate) fn check_finite(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("non-finite coordinate x[{i}] = {}", x[i]))),
        None => Ok(()),
    }
}

fn check_nonnegative(x: &[f64]) -> Result<()> {
    match x.iter().position(|&v| v < 0.0) {
        Some(i) => Err(Error::Domain(format!(
            "entropy needs nonnegative coordinates, x[{i}] = {}",
            x[i]
        ))),
        None => Ok(()),
    }
}

#[inline]
fn xlogx(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn lp_norm(x: &[f64], p: f64) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v.abs() / scale).powf(p)).sum::<f64>().powf(1.0 / p)
}
