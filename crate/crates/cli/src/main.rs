use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hypogd_core::experiment::{parse_pair, run_experiment, ConfigLayers, ExperimentConfig, RunReport};
use hypogd_core::synth::{gen_multiclass, LogitProblem, LogitProblemSpec, MulticlassProblemSpec};
use hypogd_core::verify::{run_suite, Suite};

const SEED_ENV: &str = "HYPOGD_SEED";

#[derive(Parser)]
#[command(name = "hypogd", version, about = "Online mirror descent experiments with the hyperbolic entropy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run experiments and write CSV traces.
    Run(RunArgs),
    /// Run a numerical property suite.
    Verify(VerifyArgs),
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct Overrides {
    /// Config file; repeat to run several configs.
    #[arg(long = "config", value_name = "PATH")]
    configs: Vec<PathBuf>,
    /// Override a config key; applied after files and the environment.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seed; takes precedence over HYPOGD_SEED and config files.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Output file, or a directory when several configs are given.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    log_every: Option<usize>,
    /// Number of configs run concurrently.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// potentials, projections, spectral, regret, equivalence or all.
    #[arg(default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Logit,
    Multiclass,
}

#[derive(Args)]
struct GenerateArgs {
    kind: DatasetKind,
    #[command(flatten)]
    overrides: Overrides,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("hypogd: {err:#}");
            ExitCode::FAILURE
        }
    }
}

/// Merges one config text with the environment seed and command-line pairs.
fn layered(text: Option<&str>, overrides: &Overrides, extra: &[(String, String)]) -> Result<ConfigLayers> {
    let mut layers = ConfigLayers::new();
    if let Some(text) = text {
        layers.apply_text(text)?;
    }
    if let Ok(seed) = std::env::var(SEED_ENV) {
        layers.apply(&[("seed".to_string(), seed)]).context(SEED_ENV)?;
    }
    let mut pairs = overrides.sets.iter().map(|s| parse_pair(s)).collect::<hypogd_core::Result<Vec<_>>>()?;
    if let Some(seed) = overrides.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    pairs.extend_from_slice(extra);
    layers.apply(&pairs)?;
    Ok(layers)
}

fn read_configs(paths: &[PathBuf]) -> Result<Vec<(Option<PathBuf>, String)>> {
    if paths.is_empty() {
        return Ok(vec![(None, String::new())]);
    }
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok((Some(p.clone()), text))
        })
        .collect()
}

enum Target {
    Stdout,
    File(PathBuf),
}

fn cmd_run(args: RunArgs) -> Result<bool> {
    let sources = read_configs(&args.overrides.configs)?;
    let extra: Vec<(String, String)> =
        args.log_every.map(|n| ("log_every".to_string(), n.to_string())).into_iter().collect();
    let many = sources.len() > 1;
    let mut jobs = Vec::new();
    for (path, text) in &sources {
        let label = path.as_ref().map_or("<command line>".to_string(), |p| p.display().to_string());
        let config = layered(Some(text), &args.overrides, &extra)
            .and_then(|l| Ok(l.build()?))
            .with_context(|| format!("config {label}"))?;
        let target = match (&args.output, &config.output, many) {
            (Some(dir), _, true) => {
                let stem = path.as_ref().and_then(|p| p.file_stem()).map(|s| s.to_string_lossy().into_owned());
                Target::File(dir.join(format!("{}.csv", stem.unwrap_or_else(|| "run".into()))))
            }
            (Some(file), _, false) => Target::File(file.clone()),
            (None, Some(file), _) => Target::File(PathBuf::from(file)),
            (None, None, true) => bail!("several configs need --output DIR or an output key in each config"),
            (None, None, false) => Target::Stdout,
        };
        jobs.push((label, config, target));
    }
    if let (Some(dir), true) = (&args.output, many) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }

    let workers = args.jobs.max(1).min(jobs.len());
    let results = run_parallel(&jobs, workers);
    let mut ok = true;
    for ((label, _, target), result) in jobs.iter().zip(results) {
        match result {
            Ok(report) => {
                write_report(&report, target).with_context(|| format!("writing trace for {label}"))?;
                eprintln!("{label}: {}", summary(&report));
            }
            Err(err) => {
                eprintln!("hypogd: {label}: {err}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

/// Runs each config on one of `workers` threads; results keep input order.
fn run_parallel(
    jobs: &[(String, ExperimentConfig, Target)],
    workers: usize,
) -> Vec<std::result::Result<RunReport, hypogd_core::experiment::RunError>> {
    if workers <= 1 {
        return jobs.iter().map(|(_, c, _)| run_experiment(c)).collect();
    }
    let mut slots: Vec<Option<_>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|k| {
                scope.spawn(move || {
                    (k..jobs.len()).step_by(workers).map(|i| (i, run_experiment(&jobs[i].1))).collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every job ran")).collect()
}

fn write_report(report: &RunReport, target: &Target) -> io::Result<()> {
    match target {
        Target::Stdout => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            report.write_csv(&mut out)?;
            out.flush()
        }
        Target::File(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            report.write_csv(&mut out)?;
            out.flush()
        }
    }
}

fn summary(report: &RunReport) -> String {
    let mut parts = vec![
        format!("eta={}", report.run.eta),
        format!("beta*eta={}", report.run.eta_effective),
        format!("avg_loss={:.6}", report.final_avg_loss),
    ];
    if let Some(a) = report.final_accuracy {
        parts.push(format!("accuracy={a:.4}"));
    }
    if let Some(e) = report.final_error {
        parts.push(format!("dataset_error={e:.4}"));
    }
    if let Some(r) = report.final_regret {
        parts.push(format!("regret={r:.4}"));
    }
    parts.join(" ")
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let suite: Suite = args.suite.parse()?;
    let report = run_suite(suite, args.seed)?;
    println!("{report}");
    Ok(report.passed())
}

fn cmd_generate(args: GenerateArgs) -> Result<bool> {
    let sources = read_configs(&args.overrides.configs)?;
    if sources.len() > 1 {
        bail!("generate takes one --config");
    }
    let layers = layered(Some(&sources[0].1), &args.overrides, &[])?;
    let num = |k: &str| -> Result<Option<f64>> {
        layers.get(k).map(|v| v.parse::<f64>().with_context(|| format!("key {k}"))).transpose()
    };
    let int = |k: &str| -> Result<Option<usize>> {
        layers.get(k).map(|v| v.parse::<usize>().with_context(|| format!("key {k}"))).transpose()
    };
    let seed = layers.get("seed").map(|v| v.parse::<u64>().context("key seed")).transpose()?.unwrap_or(0);
    let rows = int("rows")?.or(int("examples")?);

    let mut buf = Vec::new();
    match args.kind {
        DatasetKind::Logit => {
            let d = LogitProblemSpec::default();
            let spec = LogitProblemSpec {
                dim: int("dim")?.unwrap_or(d.dim),
                sparsity: num("sparsity")?.unwrap_or(d.sparsity),
                flip_prob: num("flip_prob")?.unwrap_or(d.flip_prob),
                batch: int("batch")?.unwrap_or(d.batch),
                seed,
            };
            LogitProblem::new(spec)?.write_csv(rows.unwrap_or(10_000), &mut buf)?;
        }
        DatasetKind::Multiclass => {
            let d = MulticlassProblemSpec::default();
            let spec = MulticlassProblemSpec {
                n: rows.unwrap_or(d.n),
                dim: int("dim")?.unwrap_or(d.dim),
                classes: int("classes")?.unwrap_or(d.classes),
                rank: int("rank")?.unwrap_or(d.rank),
                flip_prob: num("flip_prob")?.unwrap_or(d.flip_prob),
                noise_std: num("noise_std")?.unwrap_or(d.noise_std),
                scale_exponent: d.scale_exponent,
                seed,
            };
            gen_multiclass(&spec)?.write_csv(&mut buf)?;
        }
    }
    match &args.output {
        Some(path) => write_file(path, &buf)?,
        None => io::stdout().lock().write_all(&buf)?,
    }
    Ok(true)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
