//! Reference algorithms: GD, EG on the simplex, EG± and its adaptive-β
//! hypentropy form, p-norm and Schatten p-norm updates.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::potentials::{asinh_stable, pnorm_mirror, pnorm_mirror_inv, PNormParams, DUAL_LIMIT};
use crate::projections::{euclidean_project, log_add_exp, ConstraintSet};
use crate::spectral::{thin_svd, WeightMatrix};

/// EG± state `w = u - v` with `u, v > 0`, stored as logarithms so that
/// long horizons neither underflow nor overflow the components.
#[derive(Debug, Clone, PartialEq)]
pub struct EgpmState {
    log_u: Vec<f64>,
    log_v: Vec<f64>,
    beta: f64,
    cumulative_gradient: Vec<f64>,
}

impl EgpmState {
    /// `u_i = v_i = beta / 2`.
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Parameter(format!("beta must be > 0, got {beta}")));
        }
        let l = (beta / 2.0).ln();
        Ok(Self { log_u: vec![l; dim], log_v: vec![l; dim], beta, cumulative_gradient: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.log_u.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|l| l.exp()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|l| l.exp()).collect()
    }

    pub fn log_u(&self) -> &[f64] {
        &self.log_u
    }

    pub fn log_v(&self) -> &[f64] {
        &self.log_v
    }

    pub fn cumulative_gradient(&self) -> &[f64] {
        &self.cumulative_gradient
    }

    /// `u - v = e^m 2 sinh(delta)` with `m`, `delta` the half sum and half
    /// difference of the logarithms.
    pub fn w(&self) -> Vec<f64> {
        self.log_u
            .iter()
            .zip(&self.log_v)
            .map(|(lu, lv)| {
                let m = 0.5 * (lu + lv);
                let delta = 0.5 * (lu - lv);
                (m + delta.abs()).exp() * -(-2.0 * delta.abs()).exp_m1() * delta.signum()
            })
            .collect()
    }

    /// `sum_i u_i + v_i`.
    pub fn mass(&self) -> f64 {
        self.log_mass().exp()
    }

    fn log_mass(&self) -> f64 {
        self.log_u.iter().chain(&self.log_v).fold(f64::NEG_INFINITY, |acc, &l| log_add_exp(acc, l))
    }

    fn multiply(&mut self, g: &[f64], eta: f64) -> Result<()> {
        check_len(self.dim(), g.len())?;
        for (i, &gi) in g.iter().enumerate() {
            let step = eta * gi;
            if !step.is_finite() || step.abs() > DUAL_LIMIT {
                return Err(Error::Overflow { index: i, value: step, limit: DUAL_LIMIT });
            }
            self.log_u[i] -= step;
            self.log_v[i] += step;
            self.cumulative_gradient[i] += gi;
        }
        Ok(())
    }
}

/// Normalized EG±: multiplicative update, then rescaling to total mass
/// `beta d`.
pub fn egpm_step(state: &EgpmState, g: &[f64], eta: f64) -> Result<EgpmState> {
    let mut next = state.clone();
    next.multiply(g, eta)?;
    let shift = (next.beta * next.dim() as f64).ln() - next.log_mass();
    next.log_u.iter_mut().chain(next.log_v.iter_mut()).for_each(|l| *l += shift);
    Ok(next)
}

/// EG± without normalization; `u_i v_i = beta^2 / 4` is conserved.
pub fn egpm_unnormalized_step(state: &EgpmState, g: &[f64], eta: f64) -> Result<EgpmState> {
    let mut next = state.clone();
    next.multiply(g, eta)?;
    for (i, (lu, lv)) in next.log_u.iter().zip(&next.log_v).enumerate() {
        let delta = 0.5 * (lu - lv);
        if delta.abs() > DUAL_LIMIT {
            return Err(Error::Overflow { index: i, value: delta, limit: DUAL_LIMIT });
        }
    }
    Ok(next)
}

/// Normalized EG± weights after cumulative gradient `gbar`:
/// `beta d sinh(-eta gbar_i) / sum_j cosh(eta gbar_j)`, evaluated with a
/// common exponential shift.
pub fn egpm_closed_form(gbar: &[f64], eta: f64, beta: f64) -> Vec<f64> {
    let d = gbar.len() as f64;
    let top = gbar.iter().fold(0.0_f64, |m, g| m.max((eta * g).abs()));
    let denom: f64 = gbar.iter().map(|g| ((eta * g) - top).exp() + ((-eta * g) - top).exp()).sum();
    gbar.iter()
        .map(|g| beta * d * (((-eta * g) - top).exp() - ((eta * g) - top).exp()) / denom)
        .collect()
}

/// The weight recursion of unnormalized EG± written in `w` alone:
/// `sinh(-eta g) sqrt(w^2 + beta^2) + cosh(-eta g) w`.
pub fn unnormalized_w_update(w: &[f64], g: &[f64], eta: f64, beta: f64) -> Result<Vec<f64>> {
    check_len(w.len(), g.len())?;
    Ok(w.iter()
        .zip(g)
        .map(|(&wi, &gi)| (-eta * gi).sinh() * wi.hypot(beta) + (-eta * gi).cosh() * wi)
        .collect())
}

/// Hypentropy iterate with a time-varying `beta_t = beta d / sum cosh(eta gbar)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveBetaState {
    pub w: Vec<f64>,
    pub beta_t: f64,
    pub cumulative_gradient: Vec<f64>,
    beta: f64,
}

impl AdaptiveBetaState {
    /// `w = 0`, `beta_0 = beta`.
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Parameter(format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { w: vec![0.0; dim], beta_t: beta, cumulative_gradient: vec![0.0; dim], beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Maps through the previous-β mirror, steps, and maps back through the
/// new-β inverse mirror. The result always lies in the 1-ball of radius
/// `beta d`, so no projection is applied.
pub fn adaptive_hu_step(state: &AdaptiveBetaState, g: &[f64], eta: f64) -> Result<AdaptiveBetaState> {
    check_len(state.w.len(), g.len())?;
    let d = state.w.len() as f64;
    let mut gbar = state.cumulative_gradient.clone();
    gbar.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    if let Some((i, v)) = gbar.iter().map(|v| eta * v).enumerate().find(|(_, v)| !v.is_finite() || v.abs() > DUAL_LIMIT) {
        return Err(Error::Overflow { index: i, value: v, limit: DUAL_LIMIT });
    }
    // beta d / sum cosh(a_j) = beta d e^-M / sum (e^(a_j - M) + e^(-a_j - M)) * 2
    let top = gbar.iter().fold(0.0_f64, |m, v| m.max((eta * v).abs()));
    let shifted: f64 = gbar.iter().map(|v| (eta * v - top).exp() + (-eta * v - top).exp()).sum();
    let beta_t = 2.0 * state.beta * d * (-top).exp() / shifted;
    let w = state
        .w
        .iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&wi, &gi))| {
            let z = asinh_stable(wi / state.beta_t) - eta * gi;
            if !z.is_finite() || z.abs() > DUAL_LIMIT {
                return Err(Error::Overflow { index: i, value: z, limit: DUAL_LIMIT });
            }
            Ok(beta_t * z.sinh())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AdaptiveBetaState { w, beta_t, cumulative_gradient: gbar, beta: state.beta })
}

/// `w - eta g`, projected in Euclidean distance onto `set`.
pub fn gd_step(w: &[f64], g: &[f64], eta: f64, set: &ConstraintSet) -> Result<Vec<f64>> {
    check_len(w.len(), g.len())?;
    let y: Vec<f64> = w.iter().zip(g).map(|(a, b)| a - eta * b).collect();
    euclidean_project(set, &y)
}

/// Exponentiated gradient on the simplex of mass `w.iter().sum()`.
pub fn eg_step(w: &[f64], g: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_len(w.len(), g.len())?;
    if w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("EG weights must be positive".into()));
    }
    let mass: f64 = w.iter().sum();
    let logs: Vec<f64> = w.iter().zip(g).map(|(a, b)| a.ln() - eta * b).collect();
    let total = logs.iter().fold(f64::NEG_INFINITY, |acc, &l| log_add_exp(acc, l));
    Ok(logs.iter().map(|l| mass * (l - total).exp()).collect())
}

/// Unconstrained p-norm step through the mirror map of `0.5 ||w||_p^2`.
pub fn pnorm_step(w: &[f64], g: &[f64], eta: f64, params: &PNormParams) -> Result<Vec<f64>> {
    check_len(w.len(), g.len())?;
    let z: Vec<f64> = pnorm_mirror(w, params).iter().zip(g).map(|(a, b)| a - eta * b).collect();
    Ok(pnorm_mirror_inv(&z, params))
}

/// The p-norm step applied to singular values.
pub fn schatten_pnorm_step(
    w: &WeightMatrix,
    g: &DMatrix<f64>,
    eta: f64,
    params: &PNormParams,
) -> Result<WeightMatrix> {
    if w.entries().shape() != g.shape() {
        return Err(Error::Shape {
            expected: format!("{}x{}", w.nrows(), w.ncols()),
            found: format!("{}x{}", g.nrows(), g.ncols()),
        });
    }
    let svd = w.svd()?;
    let dual_sigma = pnorm_mirror(svd.sigma.as_slice(), params);
    let dual = svd.with_values(&dual_sigma) - g * eta;
    let next = thin_svd(&dual)?;
    let sigma = pnorm_mirror_inv(next.sigma.as_slice(), params);
    Ok(WeightMatrix::from_factors(next.u, DVector::from_vec(sigma), next.v))
}
