//! Numerical property suites behind `hypogd verify`.
//!
//! Every check measures a nonnegative violation and compares it with a
//! limit; the report prints both so the slack is visible.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::baselines::{adaptive_hu_step, egpm_step, egpm_unnormalized_step, AdaptiveBetaState, EgpmState};
use crate::error::{Error, Result};
use crate::omd::{
    check_three_point, hu_step, matrix_omd_run, omd_regret_bound, omd_run, LinearStream, LossOracle,
    MatrixLinearStream, MatrixMethod, MatrixProblem, MatrixSet, MatrixStreamKind, OnlineProblem, StepSizeRule,
    StreamKind,
};
use crate::potentials::{
    bregman_div, diameter_bound, hyp_grad, hyp_grad_inv, hyp_second_deriv, hyp_value, DiameterSet,
    HypentropyParams, Potential,
};
use crate::projections::{euclidean_project, project, pythagorean_gap, ConstraintSet, RootFindConfig};
use crate::spectral::{
    check_spectral_strong_convexity, eigen_trace_function, project_trace_ball, random_trace_ball_point,
    shu_step, spectral_conjugate, spectral_div, spectral_grad, spectral_value, symmetrize, SpectralPotential,
    WeightMatrix,
};
use crate::synth::random_rotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Potentials,
    Projections,
    Spectral,
    Regret,
    Equivalence,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["potentials", "projections", "spectral", "regret", "equivalence", "all"];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Potentials => "potentials",
            Suite::Projections => "projections",
            Suite::Spectral => "spectral",
            Suite::Regret => "regret",
            Suite::Equivalence => "equivalence",
            Suite::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "potentials" => Suite::Potentials,
            "projections" => Suite::Projections,
            "spectral" => Suite::Spectral,
            "regret" => Suite::Regret,
            "equivalence" => Suite::Equivalence,
            "all" => Suite::All,
            _ => {
                return Err(Error::Parameter(format!(
                    "unknown suite `{s}` (expected one of {})",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    /// Measured violation; the check passes when it is `<= limit`.
    pub measured: f64,
    pub limit: f64,
}

impl Check {
    fn new(suite: &'static str, name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { suite, name: name.into(), measured, limit }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.limit
    }

    pub fn slack(&self) -> f64 {
        self.limit - self.measured
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}/{}: measured {:.3e}, limit {:.3e}, slack {:.3e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.limit,
            self.slack()
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

/// Runs a suite with a fixed seed.
pub fn run_suite(suite: Suite, seed: u64) -> Result<Report> {
    let mut checks = Vec::new();
    let all = suite == Suite::All;
    if all || suite == Suite::Potentials {
        checks.extend(potentials_suite(seed)?);
    }
    if all || suite == Suite::Projections {
        checks.extend(projections_suite(seed)?);
    }
    if all || suite == Suite::Spectral {
        checks.extend(spectral_suite(seed)?);
    }
    if all || suite == Suite::Regret {
        checks.extend(regret_suite(seed)?);
    }
    if all || suite == Suite::Equivalence {
        checks.extend(equivalence_suite(seed)?);
    }
    Ok(Report { checks })
}

/// Uniform point of the 2-ball of radius `r`.
pub fn sample_l2_ball<R: Rng>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    g.into_iter().map(|v| v * radius / norm).collect()
}

/// Uniform point of the 1-ball of radius `r`.
pub fn sample_l1_ball<R: Rng>(rng: &mut R, d: usize, r: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    e.into_iter()
        .map(|v| {
            let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
            s * v * radius / total
        })
        .collect()
}

fn coord_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(f64::MIN_POSITIVE))
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

/// `||a - b||_inf / max(||a||_inf, ||b||_inf)`.
fn vec_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));
    max_abs(a, b) / scale
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn potentials_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "potentials";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let betas = [0.01, 1.0, 100.0];

    let mut inverse = 0.0_f64;
    let mut fd = 0.0_f64;
    let mut hess = 0.0_f64;
    for &beta in &betas {
        let params = HypentropyParams::new(beta)?;
        for _ in 0..100 {
            let x: Vec<f64> = (0..5)
                .map(|_| {
                    let mag = 10f64.powf(rng.random_range(-3.0..3.0));
                    if rng.random::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            inverse = inverse.max(coord_rel(&hyp_grad_inv(&hyp_grad(&x, &params)?, &params)?, &x));
            let y: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let g = hyp_grad(&y, &params)?;
            for i in 0..y.len() {
                let h = 1e-5;
                let (mut plus, mut minus) = (y.clone(), y.clone());
                plus[i] += h;
                minus[i] -= h;
                let numeric = (hyp_value(&plus, &params)? - hyp_value(&minus, &params)?) / (2.0 * h);
                fd = fd.max((numeric - g[i]).abs());
            }
            for hi in hyp_second_deriv(&x, &params)? {
                hess = hess.max(if hi > 0.0 { hi * beta } else { f64::INFINITY });
            }
        }
    }
    out.push(Check::new(S, "inverse pair (relative)", inverse, 1e-12));
    out.push(Check::new(S, "gradient vs central differences", fd, 1e-6));
    out.push(Check::new(S, "second derivative in (0, 1/beta] (scaled by beta)", hess, 1.0));

    let d = 20;
    let (mut sc2, mut sc1, mut neg, mut ident, mut diam2, mut diam1) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &beta in &[0.05, 0.5, 1.0] {
        let params = HypentropyParams::new(beta)?;
        let pot = Potential::Hypentropy(params);
        let zero = vec![0.0; d];
        let bound2 = diameter_bound(&pot, DiameterSet::B2)?;
        let bound1 = diameter_bound(&pot, DiameterSet::B1)?;
        for i in 0..1000 {
            let x = sample_l2_ball(&mut rng, d, 1.0);
            let h = hyp_second_deriv(&x, &params)?;
            let min_h = h.iter().copied().fold(f64::INFINITY, f64::min);
            sc2 = sc2.max(1.0 / (1.0 + beta) - min_h);
            diam2 = diam2.max(bregman_div(&pot, &x, &zero)? - bound2);

            let x1 = if i < d {
                let mut e = vec![0.0; d];
                e[i] = if i % 2 == 0 { 1.0 } else { -1.0 };
                e
            } else {
                sample_l1_ball(&mut rng, d, 1.0)
            };
            let y = sample_l1_ball(&mut rng, d, 1.0);
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            let h1 = hyp_second_deriv(&x1, &params)?;
            let quad: f64 = y.iter().zip(&h1).map(|(yi, hi)| hi * (yi / y_norm).powi(2)).sum();
            sc1 = sc1.max(1.0 / (1.0 + beta * d as f64) - quad);
            diam1 = diam1.max(bregman_div(&pot, &x1, &zero)? - bound1);

            let z = sample_l2_ball(&mut rng, d, 3.0);
            neg = neg.max(-bregman_div(&pot, &x, &z)?);
            ident = ident.max(bregman_div(&pot, &x, &x)?.abs());
        }
    }
    out.push(Check::new(S, "strong convexity on the 2-ball", sc2.max(0.0), 0.0));
    out.push(Check::new(S, "strong convexity on the 1-ball", sc1.max(0.0), 1e-15));
    out.push(Check::new(S, "divergence nonnegativity", neg.max(0.0), 1e-12));
    out.push(Check::new(S, "divergence of a point to itself", ident, 1e-12));
    out.push(Check::new(S, "2-ball diameter bound", diam2.max(0.0), 0.0));
    out.push(Check::new(S, "1-ball diameter bound", diam1.max(0.0), 0.0));

    let (mut gd_limit, mut eg_limit) = (0.0_f64, 0.0_f64);
    for _ in 0..100 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let xmax = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let beta = 1e4 * xmax;
        let g = hyp_grad(&x, &HypentropyParams::new(beta)?)?;
        let err = x.iter().zip(&g).map(|(xi, gi)| (gi - xi / beta).abs()).fold(0.0, f64::max);
        gd_limit = gd_limit.max(err / (1e-6 * xmax / beta));

        let pos: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..2.0)).collect();
        let beta = 1e-4 * pos.iter().copied().fold(f64::INFINITY, f64::min);
        let g = hyp_grad(&pos, &HypentropyParams::new(beta)?)?;
        for (xi, gi) in pos.iter().zip(&g) {
            eg_limit = eg_limit.max((gi - (2.0 * xi / beta).ln()).abs());
        }
    }
    out.push(Check::new(S, "large-beta gradient limit (relative to allowance)", gd_limit, 1.0));
    out.push(Check::new(S, "small-beta logarithmic limit", eg_limit, 1e-6));
    Ok(out)
}

fn projections_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "projections";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let cfg = RootFindConfig::default();
    let mut out = Vec::new();
    let d = 10;
    for (label, set) in [("1-ball", ConstraintSet::L1Ball(1.0)), ("2-ball", ConstraintSet::L2Ball(1.0))] {
        let (mut feas, mut idem, mut opt, mut pyth, mut kkt) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for &beta in &[0.1, 1.0] {
            let params = HypentropyParams::new(beta)?;
            let pot = Potential::Hypentropy(params);
            for _ in 0..20 {
                let y: Vec<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let w = project(&pot, &set, &y, &cfg)?;
                let norm = match set {
                    ConstraintSet::L1Ball(_) => w.iter().map(|v| v.abs()).sum::<f64>(),
                    _ => w.iter().map(|v| v * v).sum::<f64>().sqrt(),
                };
                feas = feas.max(norm - 1.0);
                idem = idem.max(max_abs(&project(&pot, &set, &w, &cfg)?, &w));
                let best = bregman_div(&pot, &w, &y)?;
                for _ in 0..1000 {
                    let c = match set {
                        ConstraintSet::L1Ball(_) => sample_l1_ball(&mut rng, d, 1.0),
                        _ => sample_l2_ball(&mut rng, d, 1.0),
                    };
                    opt = opt.max(best - bregman_div(&pot, &c, &y)?);
                    pyth = pyth.max(-pythagorean_gap(&pot, &c, &y, &w)?);
                }
                if matches!(set, ConstraintSet::L1Ball(_)) {
                    let thetas: Vec<f64> = w
                        .iter()
                        .zip(&y)
                        .filter(|(wi, _)| **wi != 0.0)
                        .map(|(wi, yi)| ((yi / beta).asinh() - (wi / beta).asinh()) * wi.signum())
                        .collect();
                    let lo = thetas.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = thetas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    kkt = kkt.max(hi - lo).max(-lo);
                }
            }
        }
        out.push(Check::new(S, format!("{label} feasibility"), feas.max(0.0), 1e-10));
        out.push(Check::new(S, format!("{label} idempotence"), idem, 1e-10));
        out.push(Check::new(S, format!("{label} optimality vs sampled points"), opt.max(0.0), 1e-8));
        out.push(Check::new(S, format!("{label} Pythagorean inequality"), pyth.max(0.0), 1e-8));
        if matches!(set, ConstraintSet::L1Ball(_)) {
            out.push(Check::new(S, "1-ball dual soft-threshold structure", kkt, 1e-9));
        }
    }
    let mut euc = 0.0_f64;
    for _ in 0..100 {
        let y: Vec<f64> = (0..d).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let w = euclidean_project(&ConstraintSet::L1Ball(1.0), &y)?;
        euc = euc.max(w.iter().map(|v| v.abs()).sum::<f64>() - 1.0);
    }
    out.push(Check::new(S, "Euclidean 1-ball feasibility", euc.max(0.0), 1e-10));
    Ok(out)
}

fn orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    random_rotation(rng, n)
}

fn spectral_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "spectral";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let cfg = RootFindConfig::default();
    let (m, n) = (4, 6);
    let beta = 0.5;
    let params = HypentropyParams::new(beta)?;
    let scalar = Potential::Hypentropy(params);
    let pot = SpectralPotential::new(scalar, m, n)?;
    let mut out = Vec::new();

    let mut invariance = 0.0_f64;
    for _ in 0..50 {
        let x = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
        let (u, v) = (orthogonal(&mut rng, m), orthogonal(&mut rng, n));
        let a = WeightMatrix::new(x.clone());
        let b = WeightMatrix::new(&u * x * v.transpose());
        let scale = 1.0 + spectral_value(&pot, &a)?.abs();
        invariance = invariance.max((spectral_value(&pot, &a)? - spectral_value(&pot, &b)?).abs() / scale);
        invariance = invariance.max((a.trace_norm()? - b.trace_norm()?).abs() / (1.0 + a.trace_norm()?));
        invariance = invariance.max((a.spectral_norm()? - b.spectral_norm()?).abs() / (1.0 + a.spectral_norm()?));
    }
    out.push(Check::new(S, "orthogonal invariance", invariance, 1e-9));

    let mut diagonal = 0.0_f64;
    for _ in 0..50 {
        let x: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let diag = |v: &[f64]| DMatrix::from_fn(m, n, |i, j| if i == j { v[i] } else { 0.0 });
        let xm = WeightMatrix::new(diag(&x));
        diagonal = diagonal.max((spectral_value(&pot, &xm)? - hyp_value(&x, &params)?).abs());
        let grad = spectral_grad(&pot, &xm)?;
        diagonal = diagonal.max((grad.entries() - diag(&hyp_grad(&x, &params)?)).amax());
        let step = shu_step(&xm, &diag(&g), 0.3, &params)?;
        diagonal = diagonal.max((step.entries() - diag(&hu_step(&x, &g, 0.3, &params)?)).amax());
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let proj = project_trace_ball(&WeightMatrix::new(diag(&y)), 1.0, &params, &cfg)?;
        let vec_proj = project(&scalar, &ConstraintSet::L1Ball(1.0), &y, &cfg)?;
        diagonal = diagonal.max((proj.entries() - diag(&vec_proj)).amax());
    }
    out.push(Check::new(S, "diagonal reduction", diagonal, 1e-9));

    let mut fd = 0.0_f64;
    for _ in 0..20 {
        let sigma: Vec<f64> = (0..m).map(|i| 0.3 + 0.5 * i as f64 + rng.random_range(0.0..0.1)).collect();
        let (u, v) = (orthogonal(&mut rng, m), orthogonal(&mut rng, n));
        let s = DMatrix::from_fn(m, n, |i, j| if i == j { sigma[i] } else { 0.0 });
        let x = &u * s * v.transpose();
        let grad = spectral_grad(&pot, &WeightMatrix::new(x.clone()))?;
        let h = 1e-5;
        for i in 0..m {
            for j in 0..n {
                let (mut plus, mut minus) = (x.clone(), x.clone());
                plus[(i, j)] += h;
                minus[(i, j)] -= h;
                let numeric = (spectral_value(&pot, &WeightMatrix::new(plus))?
                    - spectral_value(&pot, &WeightMatrix::new(minus))?)
                    / (2.0 * h);
                let exact = grad.entries()[(i, j)];
                fd = fd.max((numeric - exact).abs() / exact.abs().max(1.0));
            }
        }
    }
    out.push(Check::new(S, "gradient vs central differences (gaps > 0.1)", fd, 1e-5));

    let mut conj = f64::NEG_INFINITY;
    for _ in 0..50 {
        let z = WeightMatrix::new(DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal)));
        let bound = spectral_conjugate(&z, &params)?;
        let mut candidates: Vec<DMatrix<f64>> =
            (0..20).map(|_| DMatrix::<f64>::from_fn(m, n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal))).collect();
        let f = z.svd()?;
        candidates.push(f.with_values(&f.sigma.iter().map(|s| beta * s.sinh()).collect::<Vec<_>>()));
        for c in candidates {
            let inner = c.dot(z.entries());
            let gap = inner - spectral_value(&pot, &WeightMatrix::new(c))? - bound;
            conj = conj.max(gap / (1.0 + bound.abs()));
        }
    }
    out.push(Check::new(S, "conjugate lifting upper bound", conj.max(0.0), 1e-6));

    let mut sym = 0.0_f64;
    for _ in 0..50 {
        let x = DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal));
        let shifted = |t: f64| crate::potentials::hyp_scalar(t, beta) + beta;
        let lhs = eigen_trace_function(&symmetrize(&x), shifted);
        let sv = WeightMatrix::new(x).singular_values()?;
        let rhs = 2.0 * sv.iter().map(|&s| shifted(s)).sum::<f64>();
        sym = sym.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    out.push(Check::new(S, "symmetrization doubles the shifted potential", sym, 1e-9));

    let tau = 1.0;
    let (mut feas, mut idem, mut opt) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..20 {
        let y = WeightMatrix::new(DMatrix::<f64>::from_fn(m, n, |_, _| rng.sample(StandardNormal)));
        let w = project_trace_ball(&y, tau, &params, &cfg)?;
        feas = feas.max(w.trace_norm()? - tau);
        idem = idem.max((project_trace_ball(&w, tau, &params, &cfg)?.entries() - w.entries()).amax());
        let best = spectral_div(&pot, &w, &y)?;
        for _ in 0..200 {
            let c = WeightMatrix::new(random_trace_ball_point(&mut rng, m, n, tau));
            opt = opt.max(best - spectral_div(&pot, &c, &y)?);
        }
    }
    out.push(Check::new(S, "trace-ball feasibility", feas.max(0.0), 1e-10));
    out.push(Check::new(S, "trace-ball idempotence", idem, 1e-10));
    out.push(Check::new(S, "trace-ball optimality vs sampled points", opt.max(0.0), 1e-8));

    let report = check_spectral_strong_convexity(tau, 0.2, m, n, 1000, seed)?;
    out.push(Check::new(S, "trace-ball strong convexity violations", report.violations as f64, 0.0));
    Ok(out)
}

/// Max over rounds of `||g_t||` for a vector stream, recomputed by replay.
fn stream_norms(stream: &LinearStream, horizon: usize, p: f64) -> Result<Vec<f64>> {
    let w = vec![0.0; stream.dim];
    (0..horizon)
        .map(|t| {
            let (_, g) = stream.evaluate(t, &w)?;
            Ok(if p.is_infinite() {
                g.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            } else {
                g.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
        })
        .collect()
}

fn regret_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "regret";
    let mut out = Vec::new();
    let horizon = 2000;

    let d = 20;
    for kind in [StreamKind::SignedBasis, StreamKind::Sphere, StreamKind::Adaptive] {
        let stream = LinearStream::new(kind, d, seed);
        let rule = StepSizeRule::TunedL2 { g2: 1.0, beta: 1.0, horizon };
        let problem = OnlineProblem { set: ConstraintSet::L2Ball(1.0), oracle: &stream, horizon };
        let ledger = omd_run(&problem, &Potential::hypentropy(1.0)?, &rule)?;
        let bound = rule.regret_bound().unwrap_or(f64::NAN);
        out.push(Check::new(S, format!("2-ball tuned bound, {kind:?} stream"), ledger.final_regret().unwrap_or(f64::INFINITY), bound));
    }

    let beta = 1.0 / d as f64;
    for kind in [StreamKind::SignCube, StreamKind::Drift(0.5), StreamKind::Adaptive] {
        let stream = LinearStream::new(kind, d, seed);
        let rule = StepSizeRule::TunedL1 { g_inf: 1.0, beta, dim: d, horizon };
        let problem = OnlineProblem { set: ConstraintSet::L1Ball(1.0), oracle: &stream, horizon };
        let ledger = omd_run(&problem, &Potential::hypentropy(beta)?, &rule)?;
        let bound = rule.regret_bound().unwrap_or(f64::NAN);
        out.push(Check::new(S, format!("1-ball tuned bound, {kind:?} stream"), ledger.final_regret().unwrap_or(f64::INFINITY), bound));

        // general mirror descent bound with the 1-ball modulus 1/(1+beta d)
        let pot = Potential::hypentropy(beta)?;
        let norms = stream_norms(&stream, horizon, f64::INFINITY)?;
        let general = omd_regret_bound(
            ledger.eta,
            diameter_bound(&pot, DiameterSet::B1)?,
            1.0 / (1.0 + beta * d as f64),
            &norms,
        );
        out.push(Check::new(S, format!("general OMD bound, {kind:?} stream"), ledger.final_regret().unwrap_or(f64::INFINITY), general));
    }

    let (m, n, tau, gamma) = (3, 4, 1.0, 0.2);
    for kind in [MatrixStreamKind::SignedBasis, MatrixStreamKind::RankOne] {
        let stream = MatrixLinearStream::new(kind, m, n, seed);
        let rule = StepSizeRule::TunedTrace { g_inf: 1.0, gamma, tau, m, n, horizon: 500 };
        let problem = MatrixProblem { set: MatrixSet::TraceBall(tau), oracle: &stream, horizon: 500 };
        let method = MatrixMethod::Spectral(HypentropyParams::new(gamma * tau)?);
        let ledger = matrix_omd_run(&problem, &method, &rule)?;
        let bound = rule.regret_bound().unwrap_or(f64::NAN);
        out.push(Check::new(S, format!("trace-ball tuned bound, {kind:?} stream"), ledger.final_regret().unwrap_or(f64::INFINITY), bound));
    }

    let stream = LinearStream::new(StreamKind::Sphere, d, seed);
    let rule = StepSizeRule::TunedGeneric { mu: 1.0, diameter: 0.5, lipschitz: 1.0, horizon };
    let problem = OnlineProblem { set: ConstraintSet::L2Ball(1.0), oracle: &stream, horizon };
    let ledger = omd_run(&problem, &Potential::SquaredEuclidean, &rule)?;
    out.push(Check::new(
        S,
        "projected gradient descent tuned bound",
        ledger.final_regret().unwrap_or(f64::INFINITY),
        rule.regret_bound().unwrap_or(f64::NAN),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let mut three = 0.0_f64;
    for pot in [Potential::hypentropy(0.3)?, Potential::SquaredEuclidean, Potential::Entropy] {
        for _ in 0..200 {
            let pick = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..5)
                    .map(|_| if pot == Potential::Entropy { rng.random_range(0.05..2.0) } else { rng.random_range(-2.0..2.0) })
                    .collect()
            };
            let (x, y, z) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
            three = three.max(check_three_point(&pot, &x, &y, &z)?);
        }
    }
    out.push(Check::new(S, "three-point identity residual", three, 1e-10));
    Ok(out)
}

fn equivalence_suite(seed: u64) -> Result<Vec<Check>> {
    const S: &str = "equivalence";
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
    let (mut normalized, mut unnormalized, mut product) = (0.0_f64, 0.0_f64, 0.0_f64);
    for &d in &[1usize, 5, 50] {
        for &eta in &[0.01, 0.5] {
            for &beta in &[0.02, 1.0] {
                let params = HypentropyParams::new(beta)?;
                let mut e = EgpmState::new(beta, d)?;
                let mut a = AdaptiveBetaState::new(beta, d)?;
                let mut eu = EgpmState::new(beta, d)?;
                let mut w = vec![0.0; d];
                for _ in 0..100 {
                    let g: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    e = egpm_step(&e, &g, eta)?;
                    a = adaptive_hu_step(&a, &g, eta)?;
                    eu = egpm_unnormalized_step(&eu, &g, eta)?;
                    w = hu_step(&w, &g, eta, &params)?;
                    normalized = normalized.max(vec_rel(&e.w(), &a.w));
                    unnormalized = unnormalized.max(vec_rel(&eu.w(), &w));
                }
                let q = beta * beta / 4.0;
                for (u, v) in eu.u().iter().zip(eu.v()) {
                    product = product.max((u * v - q).abs() / q);
                }
            }
        }
    }
    let mut out = vec![
        Check::new(S, "normalized EG+- matches adaptive-beta hypentropy", normalized, 1e-10),
        Check::new(S, "unnormalized EG+- matches unprojected hypentropy", unnormalized, 1e-10),
        Check::new(S, "unnormalized EG+- keeps u v = beta^2/4", product, 1e-10),
    ];

    let d = 8;
    let stream = LinearStream::new(StreamKind::Sphere, d, seed);
    let params = HypentropyParams::new(0.4)?;
    let eta = 0.05;
    let horizon = 300;
    let problem = OnlineProblem { set: ConstraintSet::Unconstrained, oracle: &stream, horizon };
    let mut iterates = Vec::new();
    crate::omd::omd_run_with(&problem, &Potential::Hypentropy(params), &StepSizeRule::Fixed(eta), &RootFindConfig::default(), |_, w| {
        iterates.push(w.to_vec())
    })?;
    let mut w = vec![0.0; d];
    let mut fast = 0.0_f64;
    for (t, it) in iterates.iter().enumerate() {
        fast = fast.max(vec_rel(it, &w));
        let (_, g) = stream.evaluate(t, &w)?;
        w = hu_step(&w, &g, eta, &params)?;
    }
    out.push(Check::new(S, "generic loop matches the hypentropy fast path", fast, 1e-12));

    let g = DVector::from_fn(d, |i, _| (i as f64 - 3.5) / 4.0);
    let fixed = FixedGradient(g.iter().copied().collect());
    let problem = OnlineProblem { set: ConstraintSet::Unconstrained, oracle: &fixed, horizon: 50 };
    let mut closed = 0.0_f64;
    crate::omd::omd_run_with(&problem, &Potential::Hypentropy(params), &StepSizeRule::Fixed(eta), &RootFindConfig::default(), |t, w| {
        let want: Vec<f64> = g.iter().map(|gi| params.beta() * (-(t as f64) * eta * gi).sinh()).collect();
        closed = closed.max(vec_rel(w, &want));
    })?;
    out.push(Check::new(S, "accumulated dual gradients in closed form", closed, 1e-12));

    let problem = OnlineProblem { set: ConstraintSet::L2Ball(1.0), oracle: &stream, horizon };
    let mut via_omd = Vec::new();
    crate::omd::omd_run_with(&problem, &Potential::SquaredEuclidean, &StepSizeRule::Fixed(0.3), &RootFindConfig::default(), |_, w| {
        via_omd.push(w.to_vec())
    })?;
    let mut w = vec![0.0; d];
    let mut gd = 0.0_f64;
    for (t, it) in via_omd.iter().enumerate() {
        gd = gd.max(max_abs(it, &w));
        let (_, g) = stream.evaluate(t, &w)?;
        let y: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - 0.3 * b).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        w = if norm > 1.0 { y.iter().map(|v| v / norm).collect() } else { y };
    }
    out.push(Check::new(S, "squared-norm mirror descent is projected GD", gd, 1e-12));
    Ok(out)
}

struct FixedGradient(Vec<f64>);

impl LossOracle for FixedGradient {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn evaluate(&self, _round: usize, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok((w.iter().zip(&self.0).map(|(a, b)| a * b).sum(), self.0.clone()))
    }

    fn is_linear(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for name in Suite::NAMES {
            assert_eq!(name.parse::<Suite>().unwrap().name(), name);
        }
        assert!("everything".parse::<Suite>().is_err());
    }

    #[test]
    fn each_suite_passes() {
        for suite in [Suite::Potentials, Suite::Projections, Suite::Spectral, Suite::Regret, Suite::Equivalence] {
            let report = run_suite(suite, 11).unwrap();
            assert!(!report.checks.is_empty());
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn samplers_stay_in_their_balls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let a = sample_l1_ball(&mut rng, 7, 2.0);
            assert!(a.iter().map(|v| v.abs()).sum::<f64>() <= 2.0 + 1e-12);
            let b = sample_l2_ball(&mut rng, 7, 2.0);
            assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() <= 2.0 + 1e-12);
        }
    }

    #[test]
    fn report_lists_slack() {
        let c = Check::new("x", "y", 0.25, 1.0);
        assert!(c.passed());
        assert_eq!(c.slack(), 0.75);
        assert!(c.to_string().starts_with("PASS x/y"));
        assert!(!Check::new("x", "y", 2.0, 1.0).passed());
    }
}
