//! Bregman projections onto norm balls and the simplex.
//!
//! Hypentropy projections follow from the KKT conditions of
//! `argmin_{w in K} D(w || y)`:
//!
//! * 1-norm ball: `asinh(w_i/beta) = asinh(y_i/beta) - theta sign(w_i)`, a
//!   soft threshold in the dual, `w_i = sign(y_i) beta sinh((|a_i| - theta)_+)`.
//! * simplex: the same with signed `a_i` and a free shift `theta`.
//! * 2-norm ball: `asinh(w_i/beta) + lambda w_i = asinh(y_i/beta)`, one
//!   monotone scalar root per coordinate nested in a search on `lambda >= 0`.
//!
//! For the threshold sets the total mass of `beta sinh(a_i - theta)` over an
//! active set is `beta/2 (A e^-theta - B e^theta)` with `A = sum e^{a_i}`,
//! `B = sum e^{-a_i}`, so `theta` is the root of a quadratic in `e^theta`.
//! Scanning active sets in order of decreasing `a_i` finds it exactly.

use crate::error::{check_len, Error, Result};
use crate::potentials::{asinh_stable, check_finite, dot, Potential};

/// Feasible sets for the vector algorithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConstraintSet {
    Unconstrained,
    L1Ball(f64),
    L2Ball(f64),
    /// Nonnegative vectors summing to the given mass.
    Simplex(f64),
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConstraintSet::Unconstrained => Ok(()),
            ConstraintSet::L1Ball(r) | ConstraintSet::L2Ball(r) | ConstraintSet::Simplex(r) => {
                if r.is_finite() && r > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!("set radius/mass must be > 0, got {r}")))
                }
            }
        }
    }

    /// Membership with an absolute slack `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match *self {
            ConstraintSet::Unconstrained => true,
            ConstraintSet::L1Ball(r) => l1(x) <= r + tol,
            ConstraintSet::L2Ball(r) => l2(x) <= r + tol,
            ConstraintSet::Simplex(m) => {
                x.iter().all(|&v| v >= -tol) && (x.iter().sum::<f64>() - m).abs() <= tol
            }
        }
    }
}

/// Stopping rule for the iterative projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootFindConfig {
    pub abs_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RootFindConfig {
    fn default() -> Self {
        Self { abs_tolerance: 1e-12, max_iterations: 200 }
    }
}

impl RootFindConfig {
    pub fn new(abs_tolerance: f64, max_iterations: usize) -> Result<Self> {
        if !(abs_tolerance > 0.0) || max_iterations == 0 {
            return Err(Error::Parameter(format!(
                "root finder needs tolerance > 0 and at least one iteration, got {abs_tolerance} / {max_iterations}"
            )));
        }
        Ok(Self { abs_tolerance, max_iterations })
    }
}

/// Bregman projection of `y` onto `set` under `pot`.
///
/// Points already in the set are returned unchanged. The p-norm potential
/// has no projection here and only runs unconstrained.
pub fn project(
    pot: &Potential,
    set: &ConstraintSet,
    y: &[f64],
    cfg: &RootFindConfig,
) -> Result<Vec<f64>> {
    set.validate()?;
    check_finite(y)?;
    if matches!(set, ConstraintSet::Unconstrained) {
        return Ok(y.to_vec());
    }
    match pot {
        Potential::SquaredEuclidean => euclidean_project(set, y),
        Potential::Hypentropy(params) => {
            let beta = params.beta();
            match *set {
                ConstraintSet::L1Ball(r) => {
                    if l1(y) <= r {
                        return Ok(y.to_vec());
                    }
                    Ok(hyp_l1_projection(y, beta, r))
                }
                ConstraintSet::Simplex(m) => {
                    if set.contains(y, 0.0) {
                        return Ok(y.to_vec());
                    }
                    Ok(hyp_simplex_projection(y, beta, m))
                }
                ConstraintSet::L2Ball(r) => {
                    if l2(y) <= r {
                        return Ok(y.to_vec());
                    }
                    hyp_l2_projection(y, beta, r, cfg)
                }
                ConstraintSet::Unconstrained => unreachable!(),
            }
        }
        Potential::Entropy => {
            if let Some(i) = y.iter().position(|&v| v < 0.0) {
                return Err(Error::Domain(format!(
                    "entropy projection needs y >= 0, y[{i}] = {}",
                    y[i]
                )));
            }
            let total: f64 = y.iter().sum();
            match *set {
                ConstraintSet::Simplex(m) => {
                    if total <= 0.0 {
                        return Err(Error::Domain("entropy projection of the zero vector".into()));
                    }
                    Ok(y.iter().map(|v| m * v / total).collect())
                }
                ConstraintSet::L1Ball(r) if total <= r => Ok(y.to_vec()),
                ConstraintSet::L1Ball(r) => Ok(y.iter().map(|v| r * v / total).collect()),
                _ => Err(Error::Unsupported(format!(
                    "entropy projection onto {set:?}"
                ))),
            }
        }
        Potential::PNorm(_) => Err(Error::Unsupported(
            "p-norm divergence has no projection onto constrained sets".into(),
        )),
    }
}

/// Euclidean projection: radial scaling for the 2-ball, soft thresholding
/// for the 1-ball and the simplex.
pub fn euclidean_project(set: &ConstraintSet, y: &[f64]) -> Result<Vec<f64>> {
    set.validate()?;
    Ok(match *set {
        ConstraintSet::Unconstrained => y.to_vec(),
        ConstraintSet::L2Ball(r) => {
            let n = l2(y);
            if n <= r {
                y.to_vec()
            } else {
                y.iter().map(|v| v * (r / n)).collect()
            }
        }
        ConstraintSet::L1Ball(r) => {
            if l1(y) <= r {
                return Ok(y.to_vec());
            }
            let abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
            let theta = water_level(&abs, r);
            y.iter().map(|&v| ((v.abs() - theta).max(0.0)).copysign(v)).collect()
        }
        ConstraintSet::Simplex(m) => {
            let theta = water_level(y, m);
            y.iter().map(|&v| (v - theta).max(0.0)).collect()
        }
    })
}

/// Threshold `theta` with `sum_i (v_i - theta)_+ = target`.
fn water_level(v: &[f64], target: f64) -> f64 {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - target) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    theta
}

fn hyp_l1_projection(y: &[f64], beta: f64, radius: f64) -> Vec<f64> {
    let a: Vec<f64> = y.iter().map(|&v| asinh_stable(v / beta).abs()).collect();
    let theta = dual_threshold(&a, beta, radius, 0.0);
    let mut w: Vec<f64> = y
        .iter()
        .zip(&a)
        .map(|(&yi, &ai)| {
            if ai > theta {
                (beta * (ai - theta).sinh()).copysign(yi)
            } else {
                0.0
            }
        })
        .collect();
    let mass = l1(&w);
    if mass > radius {
        let s = radius / mass;
        w.iter_mut().for_each(|v| *v *= s);
    }
    w
}

fn hyp_simplex_projection(y: &[f64], beta: f64, mass: f64) -> Vec<f64> {
    let a: Vec<f64> = y.iter().map(|&v| asinh_stable(v / beta)).collect();
    let theta = dual_threshold(&a, beta, mass, f64::NEG_INFINITY);
    let w: Vec<f64> = a
        .iter()
        .map(|&ai| if ai > theta { beta * (ai - theta).sinh() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v * (mass / total)).collect()
}

/// Solves `sum_i beta sinh((a_i - theta)_+) = target` for `theta >= floor`.
///
/// Requires the left side at `theta = floor` to exceed `target`.
pub(crate) fn dual_threshold(a: &[f64], beta: f64, target: f64, floor: f64) -> f64 {
    let mut sorted = a.to_vec();
    sorted.sort_unstable_by(|x, y| y.total_cmp(x));
    let ln_c = (target / beta).ln();
    let mut ln_a = f64::NEG_INFINITY;
    let mut ln_b = f64::NEG_INFINITY;
    let mut theta = f64::NAN;
    for k in 0..sorted.len() {
        ln_a = log_add_exp(ln_a, sorted[k]);
        ln_b = log_add_exp(ln_b, -sorted[k]);
        // e^theta = A / (c + sqrt(c^2 + AB)), all in log space
        let ln_root = 0.5 * log_add_exp(2.0 * ln_c, ln_a + ln_b);
        let candidate = ln_a - log_add_exp(ln_c, ln_root);
        let next = sorted.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY).max(floor);
        if candidate >= next {
            theta = candidate;
            break;
        }
    }
    if !theta.is_finite() {
        return threshold_bisection(a, beta, target, floor);
    }
    // Newton polish; the closed form loses a few ulps to the log-sum-exps.
    for _ in 0..2 {
        let (mut f, mut df) = (-target, 0.0);
        for &ai in a {
            if ai > theta {
                f += beta * (ai - theta).sinh();
                df += beta * (ai - theta).cosh();
            }
        }
        if df == 0.0 || f == 0.0 {
            break;
        }
        let next = theta + f / df;
        if !next.is_finite() || next < floor {
            break;
        }
        theta = next;
    }
    theta
}

/// Monotone bisection for the same threshold. Slow but unconditional.
pub(crate) fn threshold_bisection(a: &[f64], beta: f64, target: f64, floor: f64) -> f64 {
    let mass = |theta: f64| -> f64 {
        a.iter()
            .filter(|&&ai| ai > theta)
            .map(|&ai| beta * (ai - theta).sinh())
            .sum()
    };
    let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = if floor.is_finite() {
        floor
    } else {
        // mass(theta) >= beta sinh(top - theta) reaches target once
        // theta <= top - asinh(target / beta)
        top - asinh_stable(target / beta)
    };
    let mut hi = top;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn hyp_l2_projection(y: &[f64], beta: f64, radius: f64, cfg: &RootFindConfig) -> Result<Vec<f64>> {
    let a: Vec<f64> = y.iter().map(|&v| asinh_stable(v / beta).abs()).collect();
    let y_abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let solve = |lambda: f64| -> Vec<f64> {
        a.iter()
            .zip(&y_abs)
            .map(|(&ai, &yi)| solve_penalized_coord(ai, lambda, beta, yi))
            .collect()
    };

    // ||w(lambda)|| decreases from ||y|| at 0 and is below radius once
    // lambda >= ||a|| / radius, since then w_i <= a_i / lambda.
    let mut lo = 0.0;
    let mut hi = l2(&a) / radius;
    let mut lambda = 0.0;
    let mut w = y_abs.clone();
    let mut residual = l2(&w) - radius;
    let tol = cfg.abs_tolerance * radius.max(1.0);
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        if residual.abs() <= tol {
            converged = true;
            break;
        }
        if residual > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        let norm = l2(&w);
        // dw_i/dlambda = -w_i / (phi''(w_i) + lambda)
        let slope: f64 = -w
            .iter()
            .map(|&wi| wi * wi / (1.0 / wi.hypot(beta) + lambda))
            .sum::<f64>()
            / norm;
        let mut next = lambda - residual / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        lambda = next;
        w = solve(lambda);
        residual = l2(&w) - radius;
    }
    if !converged && residual.abs() > tol {
        return Err(Error::Numerical {
            context: "hypentropy 2-ball projection".into(),
            residual: residual.abs(),
        });
    }
    let norm = l2(&w);
    if norm > radius {
        let s = radius / norm;
        w.iter_mut().for_each(|v| *v *= s);
    }
    Ok(w.iter().zip(y).map(|(wi, yi)| wi.copysign(*yi)).collect())
}

/// Root of `asinh(w/beta) + lambda w = a` on `[0, upper]`, `a >= 0`.
fn solve_penalized_coord(a: f64, lambda: f64, beta: f64, upper: f64) -> f64 {
    if a == 0.0 {
        return 0.0;
    }
    if lambda == 0.0 {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper.min(a / lambda));
    let mut w = hi;
    for _ in 0..100 {
        let h = asinh_stable(w / beta) + lambda * w - a;
        if h > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let dh = 1.0 / w.hypot(beta) + lambda;
        let mut next = w - h / dh;
        if !(next >= lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 4.0 * f64::EPSILON * w.max(f64::MIN_POSITIVE) {
            return next;
        }
        w = next;
    }
    w
}

/// `D(z||x) - D(z||x') - D(x'||x)` for a projection `x'` of `x`; nonnegative
/// whenever `x'` is the Bregman projection and `z` is feasible.
pub fn pythagorean_gap(pot: &Potential, z: &[f64], x: &[f64], x_proj: &[f64]) -> Result<f64> {
    check_len(z.len(), x.len())?;
    check_len(z.len(), x_proj.len())?;
    use crate::potentials::bregman_div;
    Ok(bregman_div(pot, z, x)? - bregman_div(pot, z, x_proj)? - bregman_div(pot, x_proj, x)?)
}

#[inline]
pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

pub(crate) fn l1(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

pub(crate) fn l2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
