//! Online mirror descent with regret accounting.
//!
//! Each round the engine reveals the iterate to a [`LossOracle`], steps in
//! the dual space of the potential, maps back and projects onto the
//! feasible set. The matrix runner does the same through singular values.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::baselines::schatten_pnorm_step;
use crate::error::{check_len, Error, Result};
use crate::potentials::{asinh_stable, bregman_div, dot, HypentropyParams, PNormParams, Potential, DUAL_LIMIT};
use crate::projections::{euclidean_project, project, ConstraintSet, RootFindConfig};
use crate::spectral::{euclidean_project_trace_ball, project_trace_ball, shu_step, thin_svd, WeightMatrix};

/// A sequence of convex losses, revealed one round at a time.
///
/// `evaluate` must be a deterministic function of the round and the point
/// (it may depend on a seed fixed at construction).
pub trait LossOracle {
    fn dim(&self) -> usize;

    /// Loss value and gradient at `w` in round `round` (0-based).
    fn evaluate(&self, round: usize, w: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// True when every loss is `<g_t, w>` with `g_t` the revealed gradient.
    fn is_linear(&self) -> bool {
        false
    }
}

/// Matrix counterpart of [`LossOracle`].
pub trait MatrixLossOracle {
    fn shape(&self) -> (usize, usize);

    fn evaluate(&self, round: usize, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>;

    fn is_linear(&self) -> bool {
        false
    }
}

/// A vector online problem: domain, losses and horizon.
pub struct OnlineProblem<'a> {
    pub set: ConstraintSet,
    pub oracle: &'a dyn LossOracle,
    pub horizon: usize,
}

/// Domain of a matrix online problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixSet {
    Unconstrained,
    TraceBall(f64),
}

pub struct MatrixProblem<'a> {
    pub set: MatrixSet,
    pub oracle: &'a dyn MatrixLossOracle,
    pub horizon: usize,
}

/// Per-run record of losses, gradients and regret.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretLedger<G> {
    pub per_round_losses: Vec<f64>,
    pub cumulative_gradient: G,
    /// Comparator loss over the whole horizon; `None` on unbounded domains
    /// with linear losses.
    pub comparator_loss: Option<f64>,
    /// `regret_curve[t]` is the regret over rounds `0..=t`; empty when there
    /// is no comparator.
    pub regret_curve: Vec<f64>,
    pub final_iterate: G,
    pub eta: f64,
}

impl<G> RegretLedger<G> {
    pub fn final_regret(&self) -> Option<f64> {
        self.regret_curve.last().copied()
    }

    pub fn total_loss(&self) -> f64 {
        self.per_round_losses.iter().sum()
    }
}

/// Learning-rate schedules. The tuned variants return the rate that
/// minimizes the corresponding regret bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSizeRule {
    Fixed(f64),
    /// Hypentropy on the unit 2-ball, `||g||_2 <= g2`, `beta >= 1`.
    TunedL2 { g2: f64, beta: f64, horizon: usize },
    /// Hypentropy on the unit 1-ball, `||g||_inf <= g_inf`, `beta <= 1`.
    TunedL1 { g_inf: f64, beta: f64, dim: usize, horizon: usize },
    /// Spectral hypentropy on the trace ball of radius `tau`,
    /// `||G||_spectral <= g_inf`, `gamma = beta / tau <= 1`.
    TunedTrace { g_inf: f64, gamma: f64, tau: f64, m: usize, n: usize, horizon: usize },
    /// Any `mu`-strongly convex regularizer on a set of divergence diameter
    /// `diameter` with dual gradient norms `<= lipschitz`.
    TunedGeneric { mu: f64, diameter: f64, lipschitz: f64, horizon: usize },
}

impl StepSizeRule {
    pub fn eta(&self) -> Result<f64> {
        tuned_eta(self)
    }

    /// The product `beta * eta`, the additive step size near the origin.
    pub fn effective_rate(&self, beta: f64) -> Result<f64> {
        Ok(beta * self.eta()?)
    }

    /// Closed-form regret bound guaranteed at the tuned rate.
    pub fn regret_bound(&self) -> Option<f64> {
        match *self {
            StepSizeRule::Fixed(_) => None,
            StepSizeRule::TunedL2 { g2, horizon, .. } => Some(4.0 * g2 * (horizon as f64).sqrt()),
            StepSizeRule::TunedL1 { g_inf, beta, dim, horizon } => Some(
                3.0 * g_inf * (horizon as f64 * (1.0 + beta * dim as f64) * (3.0 / beta).ln()).sqrt(),
            ),
            StepSizeRule::TunedTrace { g_inf, gamma, tau, m, n, horizon } => Some(
                4.0 * tau
                    * g_inf
                    * (horizon as f64 * (1.0 + gamma * m.min(n) as f64) * (3.0 / gamma).ln()).sqrt(),
            ),
            StepSizeRule::TunedGeneric { mu, diameter, lipschitz, horizon } => {
                Some(2.0 * (2.0 * diameter * horizon as f64 * lipschitz * lipschitz / mu).sqrt())
            }
        }
    }
}

pub fn tuned_eta(rule: &StepSizeRule) -> Result<f64> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("{name} must be finite and > 0, got {v}")))
        }
    };
    let horizon = |t: usize| {
        if t == 0 {
            Err(Error::Parameter("horizon must be positive".into()))
        } else {
            Ok(t as f64)
        }
    };
    let eta = match *rule {
        StepSizeRule::Fixed(eta) => {
            positive("eta", eta)?;
            eta
        }
        StepSizeRule::TunedL2 { g2, beta, horizon: t } => {
            positive("g2", g2)?;
            positive("beta", beta)?;
            if beta < 1.0 {
                return Err(Error::Parameter(format!("2-ball tuning needs beta >= 1, got {beta}")));
            }
            (1.0 / (beta * (beta + 1.0) * horizon(t)?)).sqrt() / g2
        }
        StepSizeRule::TunedL1 { g_inf, beta, dim, horizon: t } => {
            positive("g_inf", g_inf)?;
            positive("beta", beta)?;
            if beta > 1.0 {
                return Err(Error::Parameter(format!("1-ball tuning needs beta <= 1, got {beta}")));
            }
            if dim == 0 {
                return Err(Error::Parameter("dimension must be positive".into()));
            }
            ((3.0 / beta).ln() / (2.0 * horizon(t)? * (1.0 + beta * dim as f64))).sqrt() / g_inf
        }
        StepSizeRule::TunedTrace { g_inf, gamma, tau, m, n, horizon: t } => {
            positive("g_inf", g_inf)?;
            positive("gamma", gamma)?;
            positive("tau", tau)?;
            if gamma > 1.0 {
                return Err(Error::Parameter(format!("trace-ball tuning needs beta/tau <= 1, got {gamma}")));
            }
            if m == 0 || n == 0 {
                return Err(Error::Parameter("matrix dimensions must be positive".into()));
            }
            ((3.0 / gamma).ln() / (horizon(t)? * (1.0 + gamma * m.min(n) as f64))).sqrt() / (2.0 * g_inf)
        }
        StepSizeRule::TunedGeneric { mu, diameter, lipschitz, horizon: t } => {
            positive("mu", mu)?;
            positive("diameter", diameter)?;
            positive("lipschitz", lipschitz)?;
            (2.0 * mu * diameter / (horizon(t)? * lipschitz * lipschitz)).sqrt()
        }
    };
    if eta.is_finite() && eta > 0.0 {
        Ok(eta)
    } else {
        Err(Error::Parameter(format!("step size evaluated to {eta}")))
    }
}

/// Right-hand side of the general mirror-descent regret bound:
/// `max_div / eta + eta / (2 mu) * sum ||g_t||_*^2`.
pub fn omd_regret_bound(eta: f64, max_div: f64, mu: f64, dual_norms: &[f64]) -> f64 {
    max_div / eta + eta / (2.0 * mu) * dual_norms.iter().map(|g| g * g).sum::<f64>()
}

/// Unprojected hypentropy step `beta sinh(asinh(w/beta) - eta g)`.
pub fn hu_step(w: &[f64], g: &[f64], eta: f64, params: &HypentropyParams) -> Result<Vec<f64>> {
    check_len(w.len(), g.len())?;
    let beta = params.beta();
    w.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (&wi, &gi))| {
            if eta * gi == 0.0 {
                return Ok(wi);
            }
            let z = asinh_stable(wi / beta) - eta * gi;
            if z.abs() > DUAL_LIMIT || !z.is_finite() {
                return Err(Error::Overflow { index: i, value: z, limit: DUAL_LIMIT });
            }
            Ok(beta * z.sinh())
        })
        .collect()
}

/// One generic mirror step: dual gradient step, inverse map, projection.
pub fn omd_step(
    pot: &Potential,
    set: &ConstraintSet,
    w: &[f64],
    g: &[f64],
    eta: f64,
    cfg: &RootFindConfig,
) -> Result<Vec<f64>> {
    check_len(w.len(), g.len())?;
    let z: Vec<f64> = pot.grad(w)?.iter().zip(g).map(|(zi, gi)| zi - eta * gi).collect();
    let y = pot.grad_inv(&z)?;
    project(pot, set, &y, cfg)
}

/// Starting point: the divergence minimizer `grad_inv(0)` projected onto
/// the set (zero for hypentropy, squared norms and p-norms; uniform for the
/// entropy on the simplex).
pub fn initial_point(pot: &Potential, set: &ConstraintSet, dim: usize, cfg: &RootFindConfig) -> Result<Vec<f64>> {
    let y = pot.grad_inv(&vec![0.0; dim])?;
    project(pot, set, &y, cfg)
}

/// Runs mirror descent for `problem.horizon` rounds.
pub fn omd_run(problem: &OnlineProblem<'_>, pot: &Potential, rule: &StepSizeRule) -> Result<RegretLedger<Vec<f64>>> {
    omd_run_with(problem, pot, rule, &RootFindConfig::default(), |_, _| {})
}

/// [`omd_run`] with an explicit solver configuration and an observer called
/// with `(t, w_t)` before each round's loss is revealed.
pub fn omd_run_with(
    problem: &OnlineProblem<'_>,
    pot: &Potential,
    rule: &StepSizeRule,
    cfg: &RootFindConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<RegretLedger<Vec<f64>>> {
    let eta = rule.eta()?;
    let dim = problem.oracle.dim();
    let set = &problem.set;
    let linear = problem.oracle.is_linear();
    let mut w = initial_point(pot, set, dim, cfg)?;
    let mut losses = Vec::with_capacity(problem.horizon);
    let mut gbar = vec![0.0; dim];
    let mut curve = Vec::new();
    let mut iterate_sum = vec![0.0; dim];
    for t in 0..problem.horizon {
        observe(t, &w);
        let (loss, g) = problem.oracle.evaluate(t, &w)?;
        check_len(dim, g.len())?;
        losses.push(loss);
        for (acc, gi) in gbar.iter_mut().zip(&g) {
            *acc += gi;
        }
        for (acc, wi) in iterate_sum.iter_mut().zip(&w) {
            *acc += wi;
        }
        if linear && bounded(set) {
            let cumulative: f64 = losses.iter().sum();
            curve.push(cumulative - linear_comparator_loss(set, &gbar)?);
        }
        w = omd_step(pot, set, &w, &g, eta, cfg)?;
    }

    let comparator_loss = if !bounded(set) && linear {
        None
    } else if linear {
        Some(linear_comparator_loss(set, &gbar)?)
    } else if problem.horizon == 0 {
        Some(0.0)
    } else {
        let n = problem.horizon as f64;
        let average: Vec<f64> = iterate_sum.iter().map(|v| v / n).collect();
        let comparator = refine_comparator(problem, &[average, w.clone()])?;
        curve = prefix_regret(problem, &losses, &comparator)?;
        Some(total_loss(problem, &comparator)?)
    };

    Ok(RegretLedger {
        per_round_losses: losses,
        cumulative_gradient: gbar,
        comparator_loss,
        regret_curve: curve,
        final_iterate: w,
        eta,
    })
}

fn bounded(set: &ConstraintSet) -> bool {
    !matches!(set, ConstraintSet::Unconstrained)
}

/// `argmin_{w in set} <gbar, w>`; zero when `gbar = 0`.
pub fn comparator_best_fixed(set: &ConstraintSet, gbar: &[f64]) -> Result<Vec<f64>> {
    set.validate()?;
    let d = gbar.len();
    if gbar.iter().all(|&g| g == 0.0) {
        return Ok(vec![0.0; d]);
    }
    match *set {
        ConstraintSet::Unconstrained => {
            Err(Error::Unsupported("linear comparator on an unbounded domain".into()))
        }
        ConstraintSet::L2Ball(r) => {
            let norm = dot(gbar, gbar).sqrt();
            Ok(gbar.iter().map(|g| -r * g / norm).collect())
        }
        ConstraintSet::L1Ball(r) => {
            let j = argmax_by(gbar, |g| g.abs());
            let mut w = vec![0.0; d];
            w[j] = -r * gbar[j].signum();
            Ok(w)
        }
        ConstraintSet::Simplex(r) => {
            let j = argmax_by(gbar, |g| -g);
            let mut w = vec![0.0; d];
            w[j] = r;
            Ok(w)
        }
    }
}

/// `min_{w in set} <gbar, w>` in closed form.
pub fn linear_comparator_loss(set: &ConstraintSet, gbar: &[f64]) -> Result<f64> {
    match *set {
        ConstraintSet::Unconstrained => {
            Err(Error::Unsupported("linear comparator on an unbounded domain".into()))
        }
        ConstraintSet::L2Ball(r) => Ok(-r * dot(gbar, gbar).sqrt()),
        ConstraintSet::L1Ball(r) => Ok(-r * gbar.iter().fold(0.0_f64, |m, g| m.max(g.abs()))),
        ConstraintSet::Simplex(r) => Ok(r * gbar.iter().copied().fold(f64::INFINITY, f64::min)),
    }
}

/// First index maximizing `key`.
fn argmax_by(x: &[f64], key: impl Fn(f64) -> f64) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if key(v) > key(x[best]) {
            best = i;
        }
    }
    best
}

/// `argmin_{||W||_tr <= tau} <Gbar, W> = -tau u_1 v_1^T`.
pub fn trace_comparator(tau: f64, gbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if gbar.iter().all(|&g| g == 0.0) {
        return Ok(DMatrix::zeros(gbar.nrows(), gbar.ncols()));
    }
    let svd = thin_svd(gbar)?;
    Ok(svd.u.column(0) * svd.v.column(0).transpose() * -tau)
}

fn total_loss(problem: &OnlineProblem<'_>, w: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..problem.horizon {
        total += problem.oracle.evaluate(t, w)?.0;
    }
    Ok(total)
}

fn total_loss_grad(problem: &OnlineProblem<'_>, w: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut total = 0.0;
    let mut grad = vec![0.0; w.len()];
    for t in 0..problem.horizon {
        let (l, g) = problem.oracle.evaluate(t, w)?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

const REFINE_STEPS: usize = 30;

/// Best fixed point in hindsight for nonlinear losses, approximated by the
/// better of the candidates followed by projected gradient descent with
/// backtracking on the cumulative loss. Its loss upper-bounds the exact
/// minimum, so regret measured against it can only understate the truth.
fn refine_comparator(problem: &OnlineProblem<'_>, candidates: &[Vec<f64>]) -> Result<Vec<f64>> {
    let set = &problem.set;
    let mut best = None::<(f64, Vec<f64>)>;
    for c in candidates {
        let c = euclidean_project(set, c)?;
        let value = total_loss(problem, &c)?;
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, c));
        }
    }
    let (mut value, mut w) = best.ok_or_else(|| Error::Parameter("no comparator candidates".into()))?;
    let mut step = 1.0 / problem.horizon.max(1) as f64;
    for _ in 0..REFINE_STEPS {
        let (_, grad) = total_loss_grad(problem, &w)?;
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<f64> = w.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let trial = euclidean_project(set, &trial)?;
            let tv = total_loss(problem, &trial)?;
            if tv < value {
                value = tv;
                w = trial;
                step *= 2.0;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(w)
}

fn prefix_regret(problem: &OnlineProblem<'_>, losses: &[f64], comparator: &[f64]) -> Result<Vec<f64>> {
    let mut ours = 0.0;
    let mut theirs = 0.0;
    let mut curve = Vec::with_capacity(losses.len());
    for (t, l) in losses.iter().enumerate() {
        ours += l;
        theirs += problem.oracle.evaluate(t, comparator)?.0;
        curve.push(ours - theirs);
    }
    Ok(curve)
}

/// Mirror geometry of a matrix run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixMethod {
    /// Spectral hypentropy.
    Spectral(HypentropyParams),
    /// Squared Frobenius norm, i.e. projected gradient descent.
    Frobenius,
    SchattenPNorm(PNormParams),
}

/// One matrix mirror step followed by projection.
pub fn matrix_step(
    method: &MatrixMethod,
    set: &MatrixSet,
    w: &WeightMatrix,
    g: &DMatrix<f64>,
    eta: f64,
    cfg: &RootFindConfig,
) -> Result<WeightMatrix> {
    match (method, *set) {
        (MatrixMethod::Spectral(params), MatrixSet::Unconstrained) => shu_step(w, g, eta, params),
        (MatrixMethod::Spectral(params), MatrixSet::TraceBall(tau)) => {
            project_trace_ball(&shu_step(w, g, eta, params)?, tau, params, cfg)
        }
        (MatrixMethod::Frobenius, set) => {
            let y = WeightMatrix::new(w.entries() - g * eta);
            match set {
                MatrixSet::Unconstrained => Ok(y),
                MatrixSet::TraceBall(tau) => euclidean_project_trace_ball(&y, tau),
            }
        }
        (MatrixMethod::SchattenPNorm(params), MatrixSet::Unconstrained) => {
            schatten_pnorm_step(w, g, eta, params)
        }
        (MatrixMethod::SchattenPNorm(_), MatrixSet::TraceBall(_)) => Err(Error::Unsupported(
            "Schatten p-norm divergence has no trace-ball projection".into(),
        )),
    }
}

/// Matrix mirror descent from `W = 0`. For linear losses on the trace ball
/// the regret is exact; for nonlinear losses the comparator is the better of
/// the average and the last iterate.
pub fn matrix_omd_run(
    problem: &MatrixProblem<'_>,
    method: &MatrixMethod,
    rule: &StepSizeRule,
) -> Result<RegretLedger<DMatrix<f64>>> {
    let eta = rule.eta()?;
    let cfg = RootFindConfig::default();
    let (m, n) = problem.oracle.shape();
    let linear = problem.oracle.is_linear();
    let mut w = WeightMatrix::zeros(m, n);
    let mut losses = Vec::with_capacity(problem.horizon);
    let mut gbar = DMatrix::zeros(m, n);
    let mut sum = DMatrix::zeros(m, n);
    let mut curve = Vec::new();
    let mut cumulative = 0.0;
    for t in 0..problem.horizon {
        let (loss, g) = problem.oracle.evaluate(t, w.entries())?;
        if g.shape() != (m, n) {
            return Err(Error::Shape { expected: format!("{m}x{n}"), found: format!("{}x{}", g.nrows(), g.ncols()) });
        }
        losses.push(loss);
        cumulative += loss;
        gbar += &g;
        sum += w.entries();
        if let (true, MatrixSet::TraceBall(tau)) = (linear, problem.set) {
            curve.push(cumulative - trace_comparator_loss(tau, &gbar)?);
        }
        w = matrix_step(method, &problem.set, &w, &g, eta, &cfg)?;
    }
    let final_iterate = w.into_entries();
    let comparator_loss = match (linear, problem.set) {
        (true, MatrixSet::TraceBall(tau)) => Some(trace_comparator_loss(tau, &gbar)?),
        (true, MatrixSet::Unconstrained) => None,
        (false, _) if problem.horizon == 0 => Some(0.0),
        (false, _) => {
            let avg = &sum / problem.horizon as f64;
            let mut best = None::<(f64, DMatrix<f64>)>;
            for c in [avg, final_iterate.clone()] {
                let mut v = 0.0;
                for t in 0..problem.horizon {
                    v += problem.oracle.evaluate(t, &c)?.0;
                }
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, c));
                }
            }
            let (value, c) = best.expect("two candidates");
            let mut ours = 0.0;
            let mut theirs = 0.0;
            for (t, l) in losses.iter().enumerate() {
                ours += l;
                theirs += problem.oracle.evaluate(t, &c)?.0;
                curve.push(ours - theirs);
            }
            Some(value)
        }
    };
    Ok(RegretLedger {
        per_round_losses: losses,
        cumulative_gradient: gbar,
        comparator_loss,
        regret_curve: curve,
        final_iterate,
        eta,
    })
}

/// `min_{||W||_tr <= tau} <Gbar, W> = -tau sigma_1(Gbar)`.
pub fn trace_comparator_loss(tau: f64, gbar: &DMatrix<f64>) -> Result<f64> {
    if gbar.iter().all(|&g| g == 0.0) {
        return Ok(0.0);
    }
    Ok(-tau * thin_svd(gbar)?.sigma[0])
}

/// `|D(x||z) - D(x||y) - D(y||z) + <grad R(z) - grad R(y), x - y>|`.
pub fn check_three_point(pot: &Potential, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
    let gz = pot.grad(z)?;
    let gy = pot.grad(y)?;
    let cross: f64 = gz.iter().zip(&gy).zip(x.iter().zip(y)).map(|((a, b), (xi, yi))| (a - b) * (xi - yi)).sum();
    let lhs = bregman_div(pot, x, z)?;
    let rhs = bregman_div(pot, x, y)? + bregman_div(pot, y, z)? - cross;
    Ok((lhs - rhs).abs())
}

/// Gradient law of a synthetic linear loss stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamKind {
    /// `+-e_i` with a uniform sign and coordinate.
    SignedBasis,
    /// Uniform on the unit 2-sphere.
    Sphere,
    /// Independent `+-1` entries.
    SignCube,
    /// `+e_0` with the given probability, otherwise a signed basis vector,
    /// so a fixed comparator gains linearly.
    Drift(f64),
    /// Responds to the iterate: `e_j sign(w_j)` at the largest `|w_j|`
    /// (round-robin basis vectors while `w = 0`).
    Adaptive,
}

/// Linear losses `<g_t, w>` with `g_t` drawn from a per-round RNG stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStream {
    pub kind: StreamKind,
    pub dim: usize,
    pub seed: u64,
    pub scale: f64,
}

impl LinearStream {
    pub fn new(kind: StreamKind, dim: usize, seed: u64) -> Self {
        Self { kind, dim, seed, scale: 1.0 }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn gradient(&self, round: usize, w: &[f64]) -> Vec<f64> {
        let mut rng = round_rng(self.seed, round);
        let d = self.dim;
        let mut g = vec![0.0; d];
        match self.kind {
            StreamKind::SignedBasis => signed_basis(&mut rng, &mut g),
            StreamKind::Sphere => {
                for v in g.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let norm = dot(&g, &g).sqrt();
                g.iter_mut().for_each(|v| *v /= norm);
            }
            StreamKind::SignCube => {
                for v in g.iter_mut() {
                    *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            StreamKind::Drift(p) => {
                if rng.random::<f64>() < p {
                    g[0] = 1.0;
                } else {
                    signed_basis(&mut rng, &mut g);
                }
            }
            StreamKind::Adaptive => {
                let j = argmax_by(w, f64::abs);
                if w.get(j).is_some_and(|v| *v != 0.0) {
                    g[j] = w[j].signum();
                } else {
                    g[round % d] = 1.0;
                }
            }
        }
        g.iter_mut().for_each(|v| *v *= self.scale);
        g
    }
}

impl LossOracle for LinearStream {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, round: usize, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len(self.dim, w.len())?;
        let g = self.gradient(round, w);
        Ok((dot(&g, w), g))
    }

    fn is_linear(&self) -> bool {
        true
    }
}

fn signed_basis(rng: &mut ChaCha8Rng, g: &mut [f64]) {
    let i = rng.random_range(0..g.len());
    g[i] = if rng.random::<bool>() { 1.0 } else { -1.0 };
}

/// Independent RNG for round `round` of a stream seeded with `seed`.
pub fn round_rng(seed: u64, round: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Gradient law of a matrix linear stream; every law has spectral norm `<= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatrixStreamKind {
    /// `+-e_i e_j^T`.
    SignedBasis,
    /// `u v^T` with uniform unit vectors.
    RankOne,
    /// Gaussian matrix divided by its spectral norm.
    Gaussian,
    /// Fixed `e_0 e_0^T` with the given probability, otherwise signed basis.
    Drift(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixLinearStream {
    pub kind: MatrixStreamKind,
    pub m: usize,
    pub n: usize,
    pub seed: u64,
}

impl MatrixLinearStream {
    pub fn new(kind: MatrixStreamKind, m: usize, n: usize, seed: u64) -> Self {
        Self { kind, m, n, seed }
    }

    pub fn gradient(&self, round: usize) -> Result<DMatrix<f64>> {
        let mut rng = round_rng(self.seed, round);
        let (m, n) = (self.m, self.n);
        let basis = |rng: &mut ChaCha8Rng| {
            let mut g = DMatrix::zeros(m, n);
            let i = rng.random_range(0..m);
            let j = rng.random_range(0..n);
            g[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            g
        };
        Ok(match self.kind {
            MatrixStreamKind::SignedBasis => basis(&mut rng),
            MatrixStreamKind::RankOne => {
                let u = nalgebra::DVector::<f64>::from_fn(m, |_, _| rng.sample(StandardNormal)).normalize();
                let v = nalgebra::DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal)).normalize();
                u * v.transpose()
            }
            MatrixStreamKind::Gaussian => {
                let g = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
                let s = thin_svd(&g)?.sigma[0];
                g / s
            }
            MatrixStreamKind::Drift(p) => {
                if rng.random::<f64>() < p {
                    let mut g = DMatrix::zeros(m, n);
                    g[(0, 0)] = 1.0;
                    g
                } else {
                    basis(&mut rng)
                }
            }
        })
    }
}

impl MatrixLossOracle for MatrixLinearStream {
    fn shape(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn evaluate(&self, round: usize, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let g = self.gradient(round)?;
        Ok((g.dot(w), g))
    }

    fn is_linear(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    struct FixedLinear(Vec<f64>);

    impl LossOracle for FixedLinear {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn evaluate(&self, _: usize, w: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((dot(&self.0, w), self.0.clone()))
        }
        fn is_linear(&self) -> bool {
            true
        }
    }

    /// `0.5 ||w - c_t||^2` with `c_t` alternating between two centers.
    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
    }

    impl LossOracle for Quadratic {
        fn dim(&self) -> usize {
            self.a.len()
        }
        fn evaluate(&self, round: usize, w: &[f64]) -> Result<(f64, Vec<f64>)> {
            let c = if round % 2 == 0 { &self.a } else { &self.b };
            let g: Vec<f64> = w.iter().zip(c).map(|(x, y)| x - y).collect();
            Ok((0.5 * dot(&g, &g), g))
        }
    }

    #[test]
    fn tuned_rates() {
        let r = StepSizeRule::TunedL2 { g2: 1.0, beta: 1.0, horizon: 4 };
        assert!((r.eta().unwrap() - 0.35355339059327376).abs() < 1e-15);
        let d = 7;
        let t = 100;
        let r = StepSizeRule::TunedL1 { g_inf: 1.0, beta: 1.0, dim: d, horizon: t };
        let want = (3f64.ln() / (2.0 * t as f64 * (1.0 + d as f64))).sqrt();
        assert!((r.eta().unwrap() - want).abs() < 1e-15);
        assert_eq!(StepSizeRule::Fixed(0.25).eta().unwrap(), 0.25);
        let r = StepSizeRule::TunedTrace { g_inf: 1.0, gamma: 0.2, tau: 1.0, m: 5, n: 8, horizon: 2000 };
        let want = 0.5 * (15f64.ln() / (2000.0 * 2.0)).sqrt();
        assert!((r.eta().unwrap() - want).abs() < 1e-15);
        assert!((r.effective_rate(0.2).unwrap() - 0.2 * want).abs() < 1e-16);
    }

    #[test]
    fn tuned_rate_preconditions() {
        assert!(StepSizeRule::TunedL2 { g2: 1.0, beta: 0.5, horizon: 4 }.eta().is_err());
        assert!(StepSizeRule::TunedL1 { g_inf: 1.0, beta: 2.0, dim: 3, horizon: 4 }.eta().is_err());
        assert!(StepSizeRule::Fixed(0.0).eta().is_err());
        assert!(StepSizeRule::TunedGeneric { mu: 1.0, diameter: 1.0, lipschitz: 1.0, horizon: 0 }.eta().is_err());
    }

    #[test]
    fn generic_rate_minimizes_general_bound() {
        let (mu, dia, g, t) = (0.4, 2.5, 1.5, 300);
        let rule = StepSizeRule::TunedGeneric { mu, diameter: dia, lipschitz: g, horizon: t };
        let eta = rule.eta().unwrap();
        let norms = vec![g; t];
        let at = omd_regret_bound(eta, dia, mu, &norms);
        assert!(at <= omd_regret_bound(eta * 1.1, dia, mu, &norms));
        assert!(at <= omd_regret_bound(eta * 0.9, dia, mu, &norms));
        assert!(at <= rule.regret_bound().unwrap());
    }

    #[test]
    fn hu_step_examples() {
        let p = HypentropyParams::new(1.0).unwrap();
        assert_eq!(hu_step(&[0.3, -2.0], &[0.0, 0.0], 0.7, &p).unwrap(), vec![0.3, -2.0]);
        let v = hu_step(&[0.0], &[1.0], 1.0, &p).unwrap();
        assert!((v[0] + 1.1752011936438015).abs() < 1e-15);
        assert!(matches!(hu_step(&[0.0], &[1.0], 1e3, &p), Err(Error::Overflow { .. })));
    }

    #[test]
    fn single_zero_round() {
        let oracle = FixedLinear(vec![0.0; 3]);
        let problem = OnlineProblem { set: ConstraintSet::L1Ball(1.0), oracle: &oracle, horizon: 1 };
        let ledger = omd_run(&problem, &Potential::hypentropy(0.5).unwrap(), &StepSizeRule::Fixed(0.1)).unwrap();
        assert_eq!(ledger.final_iterate, vec![0.0; 3]);
        assert_eq!(ledger.final_regret(), Some(0.0));
    }

    #[test]
    fn unconstrained_dual_accumulation() {
        let g = vec![0.3, -0.1, 0.0, 0.05];
        let oracle = FixedLinear(g.clone());
        let (beta, eta, t) = (0.7, 0.2, 25);
        let problem = OnlineProblem { set: ConstraintSet::Unconstrained, oracle: &oracle, horizon: t };
        let ledger = omd_run(&problem, &Potential::hypentropy(beta).unwrap(), &StepSizeRule::Fixed(eta)).unwrap();
        for (w, gi) in ledger.final_iterate.iter().zip(&g) {
            let want = beta * (-(t as f64) * eta * gi).sinh();
            assert!((w - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
        assert_eq!(ledger.comparator_loss, None);
    }

    #[test]
    fn euclidean_potential_is_projected_gd() {
        let oracle = LinearStream::new(StreamKind::Sphere, 6, 3);
        let set = ConstraintSet::L2Ball(0.5);
        let problem = OnlineProblem { set, oracle: &oracle, horizon: 200 };
        let eta = 0.05;
        let ledger = omd_run(&problem, &Potential::SquaredEuclidean, &StepSizeRule::Fixed(eta)).unwrap();
        let mut w = vec![0.0; 6];
        for t in 0..200 {
            let g = oracle.gradient(t, &w);
            let y: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
            w = euclidean_project(&set, &y).unwrap();
        }
        for (a, b) in ledger.final_iterate.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn generic_loop_matches_hu_fast_path() {
        let beta = 0.3;
        let params = HypentropyParams::new(beta).unwrap();
        let pot = Potential::Hypentropy(params);
        let oracle = LinearStream::new(StreamKind::SignCube, 8, 5);
        let set = ConstraintSet::L1Ball(1.0);
        let cfg = RootFindConfig::default();
        let eta = 0.1;
        let mut fast = vec![0.0; 8];
        let problem = OnlineProblem { set, oracle: &oracle, horizon: 300 };
        omd_run_with(&problem, &pot, &StepSizeRule::Fixed(eta), &cfg, |t, w| {
            for (a, b) in w.iter().zip(&fast) {
                assert!((a - b).abs() <= 1e-12, "round {t}");
            }
            let g = oracle.gradient(t, &fast);
            fast = project(&pot, &set, &hu_step(&fast, &g, eta, &params).unwrap(), &cfg).unwrap();
        })
        .unwrap();
    }

    #[test]
    fn regret_curve_recomputes_from_losses() {
        let oracle = LinearStream::new(StreamKind::Drift(0.3), 10, 11);
        let set = ConstraintSet::L1Ball(1.0);
        let problem = OnlineProblem { set, oracle: &oracle, horizon: 500 };
        let ledger = omd_run(&problem, &Potential::hypentropy(0.1).unwrap(), &StepSizeRule::Fixed(0.05)).unwrap();
        let mut gbar = vec![0.0; 10];
        let mut sum = 0.0;
        let mut w = vec![0.0; 10];
        let cfg = RootFindConfig::default();
        let pot = Potential::hypentropy(0.1).unwrap();
        for t in 0..500 {
            let (l, g) = oracle.evaluate(t, &w).unwrap();
            sum += l;
            gbar.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            let cmp = comparator_best_fixed(&set, &gbar).unwrap();
            assert_eq!(ledger.regret_curve[t], sum - dot(&gbar, &cmp));
            w = omd_step(&pot, &set, &w, &g, 0.05, &cfg).unwrap();
        }
        assert!(ledger.final_regret().unwrap() < ledger.total_loss() + 500.0);
    }

    #[test]
    fn comparator_examples() {
        assert_eq!(comparator_best_fixed(&ConstraintSet::L2Ball(1.0), &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let w = comparator_best_fixed(&ConstraintSet::L2Ball(1.0), &[3.0, 4.0]).unwrap();
        assert!((w[0] + 0.6).abs() < 1e-15 && (w[1] + 0.8).abs() < 1e-15);
        assert_eq!(comparator_best_fixed(&ConstraintSet::L1Ball(1.0), &[1.0, -2.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(comparator_best_fixed(&ConstraintSet::L1Ball(1.0), &[2.0, -2.0]).unwrap(), vec![-1.0, 0.0]);
        assert_eq!(comparator_best_fixed(&ConstraintSet::Simplex(2.0), &[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn l1_comparator_beats_vertices() {
        // brute force over the 2d vertices of the cross-polytope
        let g = [0.7, -1.3];
        let best = comparator_best_fixed(&ConstraintSet::L1Ball(1.0), &g).unwrap();
        let vertices = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let min = vertices.iter().map(|v| dot(&g, v)).fold(f64::INFINITY, f64::min);
        assert_eq!(dot(&g, &best), min);
        assert_eq!(linear_comparator_loss(&ConstraintSet::L1Ball(1.0), &g).unwrap(), min);
    }

    #[test]
    fn trace_comparator_matches_closed_form() {
        let g = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, -3.0, 0.0]);
        let w = trace_comparator(2.0, &g).unwrap();
        assert!((g.dot(&w) + 6.0).abs() < 1e-12);
        assert!((trace_comparator_loss(2.0, &g).unwrap() + 6.0).abs() < 1e-12);
        assert_eq!(trace_comparator(1.0, &DMatrix::zeros(2, 2)).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn three_point_identity() {
        let hyp = Potential::hypentropy(0.5).unwrap();
        assert_eq!(check_three_point(&hyp, &[0.1, 0.2], &[0.1, 0.2], &[0.1, 0.2]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mut pt = |pos: bool| -> Vec<f64> {
                (0..5).map(|_| {
                    let v: f64 = rng.random_range(-2.0..2.0);
                    if pos { v.abs() + 0.01 } else { v }
                }).collect()
            };
            let (x, y, z) = (pt(false), pt(false), pt(false));
            assert!(check_three_point(&hyp, &x, &y, &z).unwrap() <= 1e-10);
            let (x, y, z) = (pt(true), pt(true), pt(true));
            assert!(check_three_point(&Potential::Entropy, &x, &y, &z).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn nonlinear_comparator_is_refined() {
        let oracle = Quadratic { a: vec![0.4, -0.2, 0.0], b: vec![0.0, 0.2, 0.2] };
        let problem = OnlineProblem { set: ConstraintSet::L2Ball(10.0), oracle: &oracle, horizon: 40 };
        let ledger = omd_run(&problem, &Potential::hypentropy(1.0).unwrap(), &StepSizeRule::Fixed(0.3)).unwrap();
        // the minimizer of the summed loss is the midpoint of the centers
        let mid = [0.2, 0.0, 0.1];
        let best = total_loss(&problem, &mid).unwrap();
        let got = ledger.comparator_loss.unwrap();
        assert!(got >= best - 1e-12 && got <= best + 1e-6, "{got} vs {best}");
        assert_eq!(ledger.regret_curve.len(), 40);
    }

    #[test]
    fn streams_are_deterministic_and_bounded() {
        for kind in [StreamKind::SignedBasis, StreamKind::Sphere, StreamKind::SignCube, StreamKind::Drift(0.2)] {
            let s = LinearStream::new(kind, 9, 4);
            for t in 0..50 {
                let g = s.gradient(t, &[0.0; 9]);
                assert_eq!(g, s.gradient(t, &[0.0; 9]));
                assert!(g.iter().all(|v| v.abs() <= 1.0 + 1e-15));
            }
        }
        for kind in [MatrixStreamKind::SignedBasis, MatrixStreamKind::RankOne, MatrixStreamKind::Gaussian, MatrixStreamKind::Drift(0.5)] {
            let s = MatrixLinearStream::new(kind, 3, 4, 8);
            for t in 0..20 {
                let g = s.gradient(t).unwrap();
                assert!(thin_svd(&g).unwrap().sigma[0] <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn spectral_run_stays_in_trace_ball() {
        let oracle = MatrixLinearStream::new(MatrixStreamKind::Drift(0.3), 3, 4, 1);
        let problem = MatrixProblem { set: MatrixSet::TraceBall(1.0), oracle: &oracle, horizon: 300 };
        let method = MatrixMethod::Spectral(HypentropyParams::new(0.2).unwrap());
        let ledger = matrix_omd_run(&problem, &method, &StepSizeRule::Fixed(0.1)).unwrap();
        let tn = WeightMatrix::new(ledger.final_iterate.clone()).trace_norm().unwrap();
        assert!(tn <= 1.0 + 1e-10);
        // the drift coordinate is learned
        assert!(ledger.final_iterate[(0, 0)] < -0.5);
        assert_eq!(ledger.regret_curve.len(), 300);
    }

    #[test]
    fn diagonal_matrix_run_matches_vector_run() {
        struct Diag(LinearStream);
        impl MatrixLossOracle for Diag {
            fn shape(&self) -> (usize, usize) {
                (3, 3)
            }
            fn evaluate(&self, round: usize, w: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
                let diag: Vec<f64> = (0..3).map(|i| w[(i, i)]).collect();
                let (l, g) = self.0.evaluate(round, &diag)?;
                Ok((l, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g))))
            }
            fn is_linear(&self) -> bool {
                true
            }
        }
        let stream = LinearStream::new(StreamKind::SignedBasis, 3, 6);
        let oracle = Diag(stream.clone());
        let params = HypentropyParams::new(0.5).unwrap();
        let m = matrix_omd_run(
            &MatrixProblem { set: MatrixSet::Unconstrained, oracle: &oracle, horizon: 100 },
            &MatrixMethod::Spectral(params),
            &StepSizeRule::Fixed(0.05),
        )
        .unwrap();
        let v = omd_run(
            &OnlineProblem { set: ConstraintSet::Unconstrained, oracle: &stream, horizon: 100 },
            &Potential::Hypentropy(params),
            &StepSizeRule::Fixed(0.05),
        )
        .unwrap();
        for i in 0..3 {
            assert!((m.final_iterate[(i, i)] - v.final_iterate[i]).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn iterates_stay_feasible(seed in 0u64..1000, beta in 0.01f64..3.0, eta in 0.01f64..1.0) {
            let oracle = LinearStream::new(StreamKind::SignCube, 5, seed);
            for set in [ConstraintSet::L1Ball(1.0), ConstraintSet::L2Ball(1.0)] {
                let problem = OnlineProblem { set, oracle: &oracle, horizon: 30 };
                let pot = Potential::hypentropy(beta).unwrap();
                omd_run_with(&problem, &pot, &StepSizeRule::Fixed(eta), &RootFindConfig::default(), |_, w| {
                    assert!(set.contains(w, 1e-10));
                }).unwrap();
            }
        }
    }
}
