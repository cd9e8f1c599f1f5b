//! Experiment configuration, runners and CSV traces.
//!
//! Configs are flat `key=value` text with `#` comments. Layers (files,
//! environment, command-line pairs) are merged in order; a layer that sets
//! one of `eta`, `eta_effective`, `eta_prime` replaces whichever rate an
//! earlier layer set.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use nalgebra::DMatrix;

use crate::baselines::{egpm_step, EgpmState};
use crate::error::{Error, Result};
use crate::omd::{
    hu_step, matrix_step, omd_run, LinearStream, MatrixMethod, MatrixSet, OnlineProblem, StepSizeRule,
    StreamKind,
};
use crate::potentials::{HypentropyParams, PNormParams, Potential};
use crate::projections::{ConstraintSet, RootFindConfig};
use crate::spectral::WeightMatrix;
use crate::synth::{
    gen_multiclass, logit_accuracy, logloss_grad, multiclass_logloss_grad, LogitProblem, LogitProblemSpec,
    MulticlassProblemSpec,
};

pub const VERSION: &str = concat!("hypogd ", env!("CARGO_PKG_VERSION"));

/// Number of leading singular values written per trace row.
pub const LOGGED_SINGULAR_VALUES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    LogitDense,
    LogitSparse,
    MulticlassUnconstrained,
    MulticlassTrace,
    RegretLinear,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::LogitDense,
        ExperimentKind::LogitSparse,
        ExperimentKind::MulticlassUnconstrained,
        ExperimentKind::MulticlassTrace,
        ExperimentKind::RegretLinear,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::LogitDense => "logit_dense",
            ExperimentKind::LogitSparse => "logit_sparse",
            ExperimentKind::MulticlassUnconstrained => "multiclass_unconstrained",
            ExperimentKind::MulticlassTrace => "multiclass_trace",
            ExperimentKind::RegretLinear => "regret_linear",
        }
    }

    fn is_logit(&self) -> bool {
        matches!(self, ExperimentKind::LogitDense | ExperimentKind::LogitSparse)
    }

    fn is_multiclass(&self) -> bool {
        matches!(self, ExperimentKind::MulticlassUnconstrained | ExperimentKind::MulticlassTrace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Hu,
    Shu,
    Gd,
    Eg,
    Egpm,
    Pnorm,
    SchattenPnorm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Hu,
        Algorithm::Shu,
        Algorithm::Gd,
        Algorithm::Eg,
        Algorithm::Egpm,
        Algorithm::Pnorm,
        Algorithm::SchattenPnorm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Hu => "hu",
            Algorithm::Shu => "shu",
            Algorithm::Gd => "gd",
            Algorithm::Eg => "eg",
            Algorithm::Egpm => "egpm",
            Algorithm::Pnorm => "pnorm",
            Algorithm::SchattenPnorm => "schatten_pnorm",
        }
    }

    /// Whether the algorithm has a `beta` parameter.
    pub fn uses_beta(&self) -> bool {
        matches!(self, Algorithm::Hu | Algorithm::Shu | Algorithm::Egpm)
    }
}

/// How the learning rate is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    Eta(f64),
    /// The tuned rate of the run's regret bound.
    Tuned,
    /// `beta * eta`.
    Effective(f64),
    /// `eta / sqrt(1 + beta^2)`.
    Prime(f64),
}

/// Feasible set of a linear regret run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    L1,
    L2,
    Simplex,
}

impl Domain {
    fn name(&self) -> &'static str {
        match self {
            Domain::L1 => "l1",
            Domain::L2 => "l2",
            Domain::Simplex => "simplex",
        }
    }

    fn set(&self, radius: f64) -> ConstraintSet {
        match self {
            Domain::L1 => ConstraintSet::L1Ball(radius),
            Domain::L2 => ConstraintSet::L2Ball(radius),
            Domain::Simplex => ConstraintSet::Simplex(radius),
        }
    }
}

fn stream_name(kind: &StreamKind) -> String {
    match kind {
        StreamKind::SignedBasis => "signed_basis".into(),
        StreamKind::Sphere => "sphere".into(),
        StreamKind::SignCube => "sign_cube".into(),
        StreamKind::Drift(p) => format!("drift:{p}"),
        StreamKind::Adaptive => "adaptive".into(),
    }
}

fn parse_stream(v: &str) -> Result<StreamKind> {
    Ok(match v {
        "signed_basis" => StreamKind::SignedBasis,
        "sphere" => StreamKind::Sphere,
        "sign_cube" => StreamKind::SignCube,
        "adaptive" => StreamKind::Adaptive,
        _ => match v.strip_prefix("drift:") {
            Some(p) => StreamKind::Drift(parse_num("stream", p)?),
            None => return Err(Error::Parameter(format!("unknown stream `{v}`"))),
        },
    })
}

/// A run as written in a config: unset fields take per-experiment defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub algorithm: Algorithm,
    pub beta: Option<f64>,
    /// `beta` as a multiple of `||w*||_1 / d` (logistic experiments).
    pub beta_eg_multiple: Option<f64>,
    pub rate: RateSpec,
    pub horizon: Option<usize>,
    pub seed: u64,
    pub log_every: usize,
    pub dim: Option<usize>,
    pub sparsity: Option<f64>,
    pub batch: Option<usize>,
    pub flip_prob: Option<f64>,
    pub noise_std: Option<f64>,
    pub examples: Option<usize>,
    pub classes: Option<usize>,
    pub rank: Option<usize>,
    pub tau: Option<f64>,
    pub p: Option<f64>,
    pub domain: Option<Domain>,
    pub radius: Option<f64>,
    pub stream: Option<StreamKind>,
    pub output: Option<String>,
}

const RATE_KEYS: [&str; 3] = ["eta", "eta_effective", "eta_prime"];

const KEYS: [&str; 25] = [
    "experiment",
    "algorithm",
    "beta",
    "beta_eg_multiple",
    "eta",
    "eta_effective",
    "eta_prime",
    "horizon",
    "seed",
    "log_every",
    "dim",
    "sparsity",
    "batch",
    "flip_prob",
    "noise_std",
    "examples",
    "classes",
    "rank",
    "tau",
    "p",
    "domain",
    "radius",
    "stream",
    "output",
    "rows",
];

/// Ordered key=value layers merged into one map.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigLayers {
    values: BTreeMap<String, String>,
}

impl ConfigLayers {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            pairs.push(parse_pair(line).map_err(|e| Error::Parameter(format!("line {}: {e}", n + 1)))?);
        }
        Ok(pairs)
    }

    /// Merges one layer. Within a layer at most one rate key may appear.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let rates: Vec<&str> = pairs.iter().map(|(k, _)| k.as_str()).filter(|k| RATE_KEYS.contains(k)).collect();
        let mut distinct = rates.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() > 1 {
            return Err(Error::Parameter(format!(
                "set exactly one of eta, eta_effective, eta_prime (got {})",
                distinct.join(", ")
            )));
        }
        if let Some(rate) = distinct.first() {
            for k in RATE_KEYS {
                if k != *rate {
                    self.values.remove(k);
                }
            }
        }
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Parameter(format!("unknown key `{k}`")));
            }
            self.values.insert(k.clone(), v.clone());
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let pairs = Self::parse_text(text)?;
        self.apply(&pairs)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn build(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_map(&self.values)
    }
}

/// Splits `key=value`.
pub fn parse_pair(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| Error::Parameter(format!("expected key=value, got `{s}`")))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        return Err(Error::Parameter(format!("empty key in `{s}`")));
    }
    Ok((k.to_string(), v.to_string()))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parameter(format!("cannot parse {key} = `{v}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut layers = ConfigLayers::new();
        layers.apply_text(text)?;
        layers.build()
    }

    /// Re-reads the `# key=value` metadata block of a trace file.
    pub fn from_metadata(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for line in text.lines() {
            let Some(body) = line.strip_prefix("# ") else {
                if line.starts_with('#') {
                    continue;
                }
                break;
            };
            let Ok((k, v)) = parse_pair(body) else { continue };
            if !k.starts_with("derived.") {
                pairs.push((k, v));
            }
        }
        let mut layers = ConfigLayers::new();
        layers.apply(&pairs)?;
        layers.build()
    }

    fn from_map(m: &BTreeMap<String, String>) -> Result<Self> {
        let experiment_name = m.get("experiment").ok_or_else(|| Error::Parameter("missing key `experiment`".into()))?;
        let experiment = ExperimentKind::ALL
            .into_iter()
            .find(|e| e.name() == experiment_name)
            .ok_or_else(|| Error::Parameter(format!("unknown experiment `{experiment_name}`")))?;
        let algorithm_name = m.get("algorithm").ok_or_else(|| Error::Parameter("missing key `algorithm`".into()))?;
        let algorithm = Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == algorithm_name)
            .ok_or_else(|| Error::Parameter(format!("unknown algorithm `{algorithm_name}`")))?;
        let num = |k: &str| -> Result<Option<f64>> { m.get(k).map(|v| parse_num::<f64>(k, v)).transpose() };
        let int = |k: &str| -> Result<Option<usize>> { m.get(k).map(|v| parse_num::<usize>(k, v)).transpose() };
        let rate = match (m.get("eta"), m.get("eta_effective"), m.get("eta_prime")) {
            (Some(v), None, None) if v == "tuned" => RateSpec::Tuned,
            (Some(v), None, None) => RateSpec::Eta(parse_num("eta", v)?),
            (None, Some(v), None) => RateSpec::Effective(parse_num("eta_effective", v)?),
            (None, None, Some(v)) => RateSpec::Prime(parse_num("eta_prime", v)?),
            _ => return Err(Error::Parameter("set exactly one of eta, eta_effective, eta_prime".into())),
        };
        let domain = match m.get("domain").map(String::as_str) {
            None => None,
            Some("l1") => Some(Domain::L1),
            Some("l2") => Some(Domain::L2),
            Some("simplex") => Some(Domain::Simplex),
            Some(v) => return Err(Error::Parameter(format!("unknown domain `{v}`"))),
        };
        Ok(Self {
            experiment,
            algorithm,
            beta: num("beta")?,
            beta_eg_multiple: num("beta_eg_multiple")?,
            rate,
            horizon: int("horizon")?,
            seed: m.get("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(0),
            log_every: int("log_every")?.unwrap_or(10),
            dim: int("dim")?,
            sparsity: num("sparsity")?,
            batch: int("batch")?,
            flip_prob: num("flip_prob")?,
            noise_std: num("noise_std")?,
            examples: int("examples")?.or(int("rows")?),
            classes: int("classes")?,
            rank: int("rank")?,
            tau: num("tau")?,
            p: num("p")?,
            domain,
            radius: num("radius")?,
            stream: m.get("stream").map(|v| parse_stream(v)).transpose()?,
            output: m.get("output").cloned(),
        })
    }

    /// Fills defaults, resolves `beta` and the learning rate, and checks
    /// that the algorithm can run the experiment.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        use ExperimentKind::*;
        let e = self.experiment;
        let a = self.algorithm;
        let supported = match e {
            LogitDense | LogitSparse => matches!(a, Algorithm::Hu | Algorithm::Gd | Algorithm::Egpm | Algorithm::Pnorm),
            MulticlassUnconstrained => matches!(a, Algorithm::Shu | Algorithm::Gd | Algorithm::SchattenPnorm),
            MulticlassTrace => matches!(a, Algorithm::Shu | Algorithm::Gd),
            RegretLinear => matches!(a, Algorithm::Hu | Algorithm::Gd | Algorithm::Eg),
        };
        if !supported {
            return Err(Error::Unsupported(format!("algorithm {} on experiment {}", a.name(), e.name())));
        }
        if self.log_every == 0 {
            return Err(Error::Parameter("log_every must be positive".into()));
        }
        if self.beta_eg_multiple.is_some() && !e.is_logit() {
            return Err(Error::Parameter("beta_eg_multiple applies to the logistic experiments".into()));
        }
        if self.beta.is_some() && self.beta_eg_multiple.is_some() {
            return Err(Error::Parameter("set beta or beta_eg_multiple, not both".into()));
        }

        let mut run = ResolvedRun {
            experiment: e,
            algorithm: a,
            beta: None,
            rate: self.rate,
            eta: 0.0,
            eta_effective: 0.0,
            beta_eg: None,
            horizon: 0,
            seed: self.seed,
            log_every: self.log_every,
            dim: 0,
            sparsity: self.sparsity.unwrap_or(if e == LogitSparse { 0.9 } else { 0.0 }),
            batch: self.batch.unwrap_or(10),
            flip_prob: self.flip_prob.unwrap_or(if e.is_multiclass() { 0.05 } else { 0.1 }),
            noise_std: self.noise_std.unwrap_or(0.05),
            examples: self.examples.unwrap_or(200_000),
            classes: self.classes.unwrap_or(15),
            rank: self.rank.unwrap_or(5),
            tau: None,
            p: 0.0,
            domain: None,
            radius: self.radius.unwrap_or(1.0),
            stream: None,
            output: self.output.clone(),
        };
        run.dim = self.dim.unwrap_or(match e {
            LogitDense => 500,
            LogitSparse => 10_000,
            MulticlassUnconstrained | MulticlassTrace => 25,
            RegretLinear => 50,
        });
        run.horizon = self.horizon.unwrap_or(match e {
            LogitDense | LogitSparse => 20_000,
            MulticlassUnconstrained | MulticlassTrace => run.examples,
            RegretLinear => 10_000,
        });
        if run.horizon == 0 || run.dim == 0 {
            return Err(Error::Parameter("horizon and dim must be positive".into()));
        }
        if e == MulticlassTrace {
            run.tau = Some(self.tau.unwrap_or(500.0));
        } else if self.tau.is_some() {
            return Err(Error::Parameter("tau applies to multiclass_trace".into()));
        }
        if e == RegretLinear {
            run.domain = Some(self.domain.unwrap_or(if a == Algorithm::Eg { Domain::Simplex } else { Domain::L2 }));
            run.stream = Some(self.stream.unwrap_or(StreamKind::SignedBasis));
            if (a == Algorithm::Eg) != (run.domain == Some(Domain::Simplex)) {
                return Err(Error::Unsupported("eg runs exactly on the simplex domain".into()));
            }
        }
        run.p = match self.p {
            Some(p) => PNormParams::new(p)?.p(),
            None if a == Algorithm::SchattenPnorm => PNormParams::for_dimension(run.classes).p(),
            None => PNormParams::for_dimension(run.dim).p(),
        };

        if e.is_logit() {
            run.beta_eg = Some(run.logit_problem()?.beta_eg());
        }
        if a.uses_beta() {
            let beta = match (self.beta, self.beta_eg_multiple) {
                (Some(b), None) => b,
                (None, Some(mult)) => mult * run.beta_eg.expect("logistic runs carry beta_eg"),
                _ => return Err(Error::Parameter(format!("algorithm {} needs beta", a.name()))),
            };
            HypentropyParams::new(beta)?;
            run.beta = Some(beta);
        } else if self.beta.is_some() || self.beta_eg_multiple.is_some() {
            return Err(Error::Parameter(format!("algorithm {} has no beta", a.name())));
        }

        let beta = run.beta;
        let (eta, effective) = match (self.rate, beta) {
            (RateSpec::Eta(eta), Some(b)) => (eta, b * eta),
            (RateSpec::Eta(eta), None) => (eta, eta),
            (RateSpec::Effective(c), Some(b)) => (c / b, c),
            (RateSpec::Effective(c), None) => (c, c),
            (RateSpec::Prime(p), Some(b)) => {
                let eta = p * (1.0 + b * b).sqrt();
                (eta, b * eta)
            }
            (RateSpec::Prime(p), None) => (p, p),
            (RateSpec::Tuned, _) => {
                let eta = run.tuned_rule()?.eta()?;
                (eta, beta.map_or(eta, |b| b * eta))
            }
        };
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::Parameter(format!("learning rate resolved to {eta}")));
        }
        run.eta = eta;
        run.eta_effective = effective;
        if run.rate == RateSpec::Tuned {
            run.rate = RateSpec::Eta(eta);
        }
        Ok(run)
    }
}

/// A fully specified run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub experiment: ExperimentKind,
    pub algorithm: Algorithm,
    pub beta: Option<f64>,
    /// How the rate was given; kept so the echo re-resolves identically.
    /// Tuned rates are stored as the concrete value.
    pub rate: RateSpec,
    pub eta: f64,
    pub eta_effective: f64,
    pub beta_eg: Option<f64>,
    pub horizon: usize,
    pub seed: u64,
    pub log_every: usize,
    pub dim: usize,
    pub sparsity: f64,
    pub batch: usize,
    pub flip_prob: f64,
    pub noise_std: f64,
    pub examples: usize,
    pub classes: usize,
    pub rank: usize,
    pub tau: Option<f64>,
    pub p: f64,
    pub domain: Option<Domain>,
    pub radius: f64,
    pub stream: Option<StreamKind>,
    pub output: Option<String>,
}

impl ResolvedRun {
    pub fn logit_spec(&self) -> LogitProblemSpec {
        LogitProblemSpec {
            dim: self.dim,
            sparsity: self.sparsity,
            flip_prob: self.flip_prob,
            batch: self.batch,
            seed: self.seed,
        }
    }

    pub fn logit_problem(&self) -> Result<LogitProblem> {
        LogitProblem::new(self.logit_spec())
    }

    pub fn multiclass_spec(&self) -> MulticlassProblemSpec {
        MulticlassProblemSpec {
            n: self.examples,
            dim: self.dim,
            classes: self.classes,
            rank: self.rank,
            flip_prob: self.flip_prob,
            noise_std: self.noise_std,
            scale_exponent: 1.1,
            seed: self.seed,
        }
    }

    /// Gradient-norm bounds of the linear streams: `(||g||_2, ||g||_inf)`.
    fn stream_bounds(&self) -> (f64, f64) {
        match self.stream {
            Some(StreamKind::SignCube) => ((self.dim as f64).sqrt(), 1.0),
            _ => (1.0, 1.0),
        }
    }

    /// The step-size rule behind `eta=tuned`.
    pub fn tuned_rule(&self) -> Result<StepSizeRule> {
        let t = self.horizon;
        let (g2, g_inf) = self.stream_bounds();
        match (self.experiment, self.algorithm, self.domain) {
            (ExperimentKind::RegretLinear, Algorithm::Hu, Some(Domain::L2)) => {
                Ok(StepSizeRule::TunedL2 { g2: g2 * self.radius, beta: self.beta.unwrap_or(1.0) / self.radius, horizon: t })
            }
            (ExperimentKind::RegretLinear, Algorithm::Hu, Some(Domain::L1)) => Ok(StepSizeRule::TunedL1 {
                g_inf: g_inf * self.radius,
                beta: self.beta.unwrap_or(1.0) / self.radius,
                dim: self.dim,
                horizon: t,
            }),
            (ExperimentKind::RegretLinear, Algorithm::Gd, Some(domain)) => {
                let g = if domain == Domain::L2 { g2 } else { g2.max(g_inf) };
                Ok(StepSizeRule::TunedGeneric { mu: 1.0, diameter: 0.5 * self.radius * self.radius, lipschitz: g, horizon: t })
            }
            (ExperimentKind::RegretLinear, Algorithm::Eg, _) => Ok(StepSizeRule::TunedGeneric {
                mu: 1.0 / self.radius,
                diameter: self.radius * (self.dim as f64).ln().max(f64::MIN_POSITIVE),
                lipschitz: g_inf,
                horizon: t,
            }),
            // log-loss gradients on 0/1 features satisfy ||g||_inf <= 1
            (ExperimentKind::LogitDense | ExperimentKind::LogitSparse, Algorithm::Hu | Algorithm::Egpm, _) => {
                Ok(StepSizeRule::TunedL1 { g_inf: 1.0, beta: self.beta.unwrap_or(1.0), dim: self.dim, horizon: t })
            }
            _ => Err(Error::Unsupported(format!(
                "no tuned rate for {} on {}; set eta",
                self.algorithm.name(),
                self.experiment.name()
            ))),
        }
    }

    /// The resolved config as `key=value` pairs that parse back to an
    /// identical run.
    pub fn config_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        push("experiment", self.experiment.name().into());
        push("algorithm", self.algorithm.name().into());
        if let Some(b) = self.beta {
            push("beta", b.to_string());
        }
        match self.rate {
            RateSpec::Effective(c) => push("eta_effective", c.to_string()),
            RateSpec::Prime(p) => push("eta_prime", p.to_string()),
            RateSpec::Eta(_) | RateSpec::Tuned => push("eta", self.eta.to_string()),
        }
        push("horizon", self.horizon.to_string());
        push("seed", self.seed.to_string());
        push("log_every", self.log_every.to_string());
        push("dim", self.dim.to_string());
        if self.experiment.is_logit() {
            push("sparsity", self.sparsity.to_string());
            push("batch", self.batch.to_string());
        }
        if self.experiment != ExperimentKind::RegretLinear {
            push("flip_prob", self.flip_prob.to_string());
        }
        if self.experiment.is_multiclass() {
            push("noise_std", self.noise_std.to_string());
            push("examples", self.examples.to_string());
            push("classes", self.classes.to_string());
            push("rank", self.rank.to_string());
        }
        if let Some(tau) = self.tau {
            push("tau", tau.to_string());
        }
        if matches!(self.algorithm, Algorithm::Pnorm | Algorithm::SchattenPnorm) {
            push("p", self.p.to_string());
        }
        if let Some(d) = self.domain {
            push("domain", d.name().into());
            push("radius", self.radius.to_string());
        }
        if let Some(s) = &self.stream {
            push("stream", stream_name(s));
        }
        if let Some(o) = &self.output {
            push("output", o.clone());
        }
        out
    }

    /// `#`-prefixed metadata: version, the resolved config and derived
    /// quantities (`derived.*`, ignored when re-parsed).
    pub fn metadata(&self) -> String {
        let mut s = format!("# {VERSION}\n");
        for (k, v) in self.config_pairs() {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str(&format!("# derived.version=v{}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("# derived.eta={}\n", self.eta));
        s.push_str(&format!("# derived.eta_effective={}\n", self.eta_effective));
        if let Some(b) = self.beta {
            s.push_str(&format!("# derived.beta={b}\n"));
        }
        if let Some(b) = self.beta_eg {
            s.push_str(&format!("# derived.beta_eg={b}\n"));
        }
        s
    }
}

/// One logged line of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub loss: f64,
    pub avg_loss: f64,
    pub accuracy: Option<f64>,
    pub dist_l1: Option<f64>,
    pub trace_norm: Option<f64>,
    pub singular_values: Vec<f64>,
    pub regret: Option<f64>,
}

pub fn trace_header() -> String {
    let mut cols = vec!["round", "loss", "avg_loss", "accuracy", "dist_l1", "trace_norm"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    cols.extend((1..=LOGGED_SINGULAR_VALUES).map(|i| format!("sv{i}")));
    cols.push("regret".into());
    cols.join(",")
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

impl TraceRow {
    pub fn to_csv(&self) -> String {
        let mut cells = vec![
            self.round.to_string(),
            fmt_float(self.loss),
            fmt_float(self.avg_loss),
            fmt_opt(self.accuracy),
            fmt_opt(self.dist_l1),
            fmt_opt(self.trace_norm),
        ];
        for i in 0..LOGGED_SINGULAR_VALUES {
            cells.push(fmt_opt(self.singular_values.get(i).copied()));
        }
        cells.push(fmt_opt(self.regret));
        cells.join(",")
    }
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run: ResolvedRun,
    pub rows: Vec<TraceRow>,
    pub final_avg_loss: f64,
    /// Running fraction of correct online predictions.
    pub final_accuracy: Option<f64>,
    pub final_dist_l1: Option<f64>,
    /// Misclassification rate of the final weights on the whole dataset.
    pub final_error: Option<f64>,
    /// Mean loss of the final weights on the whole dataset.
    pub final_dataset_loss: Option<f64>,
    pub final_trace_norm: Option<f64>,
    pub final_regret: Option<f64>,
}

impl RunReport {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        out.write_all(self.run.metadata().as_bytes())?;
        writeln!(out, "{}", trace_header())?;
        for row in &self.rows {
            writeln!(out, "{}", row.to_csv())?;
        }
        Ok(())
    }
}

/// A run failure with the round and module where it happened.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError {
    pub round: Option<usize>,
    pub module: &'static str,
    pub source: Error,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.round {
            Some(t) => write!(f, "round {t} ({}): {}", self.module, self.source),
            None => write!(f, "{}: {}", self.module, self.source),
        }
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn at(round: usize, module: &'static str) -> impl Fn(Error) -> RunError {
    move |source| RunError { round: Some(round), module, source }
}

fn setup(module: &'static str) -> impl Fn(Error) -> RunError {
    move |source| RunError { round: None, module, source }
}

/// Resolves and executes a config.
pub fn run_experiment(config: &ExperimentConfig) -> std::result::Result<RunReport, RunError> {
    let run = config.resolve().map_err(setup("config"))?;
    run_resolved(&run)
}

pub fn run_resolved(run: &ResolvedRun) -> std::result::Result<RunReport, RunError> {
    match run.experiment {
        ExperimentKind::LogitDense | ExperimentKind::LogitSparse => run_logit(run),
        ExperimentKind::MulticlassUnconstrained | ExperimentKind::MulticlassTrace => run_multiclass(run),
        ExperimentKind::RegretLinear => run_regret(run),
    }
}

fn logs(run: &ResolvedRun, t: usize) -> bool {
    (t + 1).is_multiple_of(run.log_every)
}

fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn run_logit(run: &ResolvedRun) -> std::result::Result<RunReport, RunError> {
    let problem = run.logit_problem().map_err(setup("synth"))?;
    let d = run.dim;
    let eta = run.eta;
    let mut w = vec![0.0; d];
    let mut egpm = match run.algorithm {
        Algorithm::Egpm => Some(EgpmState::new(run.beta.unwrap_or(1.0), d).map_err(setup("baselines"))?),
        _ => None,
    };
    let hyp = run.beta.map(HypentropyParams::new).transpose().map_err(setup("potentials"))?;
    let pnorm = PNormParams::new(run.p).map_err(setup("potentials"))?;
    let mut rows = Vec::new();
    let (mut loss_sum, mut acc_sum) = (0.0, 0.0);
    for t in 0..run.horizon {
        let batch = problem.batch(t);
        let (loss, g) = logloss_grad(&w, &batch).map_err(at(t, "synth"))?;
        loss_sum += loss;
        acc_sum += logit_accuracy(&w, &batch);
        w = match run.algorithm {
            Algorithm::Hu => hu_step(&w, &g, eta, hyp.as_ref().expect("beta resolved")).map_err(at(t, "omd"))?,
            Algorithm::Gd => w.iter().zip(&g).map(|(a, b)| a - eta * b).collect(),
            Algorithm::Pnorm => crate::baselines::pnorm_step(&w, &g, eta, &pnorm).map_err(at(t, "baselines"))?,
            Algorithm::Egpm => {
                let state = egpm_step(egpm.as_ref().expect("state"), &g, eta).map_err(at(t, "baselines"))?;
                let w = state.w();
                egpm = Some(state);
                w
            }
            other => unreachable!("{} rejected by resolve", other.name()),
        };
        if logs(run, t) {
            let n = (t + 1) as f64;
            rows.push(TraceRow {
                round: t + 1,
                loss,
                avg_loss: loss_sum / n,
                accuracy: Some(acc_sum / n),
                dist_l1: Some(l1_dist(&w, &problem.w_star)),
                trace_norm: None,
                singular_values: Vec::new(),
                regret: None,
            });
        }
    }
    let n = run.horizon as f64;
    Ok(RunReport {
        run: run.clone(),
        rows,
        final_avg_loss: loss_sum / n,
        final_accuracy: Some(acc_sum / n),
        final_dist_l1: Some(l1_dist(&w, &problem.w_star)),
        final_error: None,
        final_dataset_loss: None,
        final_trace_norm: None,
        final_regret: None,
    })
}

fn run_multiclass(run: &ResolvedRun) -> std::result::Result<RunReport, RunError> {
    let data = gen_multiclass(&run.multiclass_spec()).map_err(setup("synth"))?;
    let (k, d) = (run.classes, run.dim);
    let set = match run.tau {
        Some(tau) => MatrixSet::TraceBall(tau),
        None => MatrixSet::Unconstrained,
    };
    let method = match run.algorithm {
        Algorithm::Shu => MatrixMethod::Spectral(
            HypentropyParams::new(run.beta.unwrap_or(1.0)).map_err(setup("potentials"))?,
        ),
        Algorithm::Gd => MatrixMethod::Frobenius,
        Algorithm::SchattenPnorm => MatrixMethod::SchattenPNorm(PNormParams::new(run.p).map_err(setup("potentials"))?),
        other => unreachable!("{} rejected by resolve", other.name()),
    };
    let cfg = RootFindConfig::default();
    let n = data.features.nrows();
    let mut w = WeightMatrix::zeros(k, d);
    let mut order = data.epoch_order(0);
    let mut rows = Vec::new();
    let (mut loss_sum, mut hits) = (0.0, 0usize);
    for t in 0..run.horizon {
        if t > 0 && t % n == 0 {
            order = data.epoch_order(t / n);
        }
        let i = order[t % n];
        let x = data.example(i);
        let (loss, g) = multiclass_logloss_grad(w.entries(), &x, data.labels[i]).map_err(at(t, "synth"))?;
        if crate::synth::argmax(&(w.entries() * &x)) == data.labels[i] {
            hits += 1;
        }
        loss_sum += loss;
        w = matrix_step(&method, &set, &w, &g, run.eta, &cfg).map_err(at(t, "spectral"))?;
        if logs(run, t) {
            let sigma = w.singular_values().map_err(at(t, "spectral"))?;
            let m = (t + 1) as f64;
            rows.push(TraceRow {
                round: t + 1,
                loss,
                avg_loss: loss_sum / m,
                accuracy: Some(hits as f64 / m),
                dist_l1: None,
                trace_norm: Some(sigma.iter().sum()),
                singular_values: sigma.into_iter().take(LOGGED_SINGULAR_VALUES).collect(),
                regret: None,
            });
        }
    }
    let m = run.horizon as f64;
    let final_w: &DMatrix<f64> = w.entries();
    Ok(RunReport {
        run: run.clone(),
        rows,
        final_avg_loss: loss_sum / m,
        final_accuracy: Some(hits as f64 / m),
        final_dist_l1: None,
        final_error: Some(data.error_rate(final_w)),
        final_dataset_loss: Some(data.mean_loss(final_w)),
        final_trace_norm: Some(w.trace_norm().map_err(setup("spectral"))?),
        final_regret: None,
    })
}

fn run_regret(run: &ResolvedRun) -> std::result::Result<RunReport, RunError> {
    let stream = LinearStream::new(run.stream.unwrap_or(StreamKind::SignedBasis), run.dim, run.seed);
    let domain = run.domain.unwrap_or(Domain::L2);
    let set = domain.set(run.radius);
    let pot = match run.algorithm {
        Algorithm::Hu => Potential::hypentropy(run.beta.unwrap_or(1.0)).map_err(setup("potentials"))?,
        Algorithm::Gd => Potential::SquaredEuclidean,
        Algorithm::Eg => Potential::Entropy,
        other => unreachable!("{} rejected by resolve", other.name()),
    };
    let problem = OnlineProblem { set, oracle: &stream, horizon: run.horizon };
    let ledger = omd_run(&problem, &pot, &StepSizeRule::Fixed(run.eta)).map_err(setup("omd"))?;
    let mut rows = Vec::new();
    let mut sum = 0.0;
    for (t, loss) in ledger.per_round_losses.iter().enumerate() {
        sum += loss;
        if logs(run, t) {
            rows.push(TraceRow {
                round: t + 1,
                loss: *loss,
                avg_loss: sum / (t + 1) as f64,
                accuracy: None,
                dist_l1: None,
                trace_norm: None,
                singular_values: Vec::new(),
                regret: ledger.regret_curve.get(t).copied(),
            });
        }
    }
    Ok(RunReport {
        run: run.clone(),
        rows,
        final_avg_loss: sum / run.horizon as f64,
        final_accuracy: None,
        final_dist_l1: None,
        final_error: None,
        final_dataset_loss: None,
        final_trace_norm: None,
        final_regret: ledger.final_regret(),
    })
}
