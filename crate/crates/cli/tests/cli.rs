use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hypogd_core::experiment::ExperimentConfig;

fn hypogd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypogd"))
        .args(args)
        .current_dir(dir)
        .env_remove("HYPOGD_SEED")
        .output()
        .expect("binary runs")
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect()
}

fn metadata_value<'a>(csv: &'a str, key: &str) -> Option<&'a str> {
    csv.lines().find_map(|l| l.strip_prefix("# ")?.strip_prefix(key)?.strip_prefix('='))
}

const DENSE: &str = "experiment=logit_dense\nalgorithm=hu\nbeta=1\neta=tuned\nseed=7\n";

#[test]
fn tuned_dense_run_logs_every_ten_rounds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dense.cfg"), DENSE).unwrap();
    let out = hypogd(&["run", "--config", "dense.cfg", "--output", "trace.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2000);
    let rounds: Vec<usize> = rows.iter().map(|r| r.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(rounds.windows(2).all(|w| w[1] == w[0] + 10));
    assert_eq!(metadata_value(&csv, "seed"), Some("7"));
    assert!(metadata_value(&csv, "derived.version").unwrap().starts_with('v'));
}

#[test]
fn identical_invocations_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "experiment=logit_sparse\nalgorithm=hu\nbeta_eg_multiple=2\neta_prime=0.1\ndim=800\nhorizon=400\nseed=3\n").unwrap();
    let a = hypogd(&["run", "--config", "run.cfg"], dir.path());
    let b = hypogd(&["run", "--config", "run.cfg"], dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let csv = String::from_utf8(a.stdout).unwrap();
    let loss = data_rows(&csv)[0].split(',').nth(1).unwrap();
    let mantissa = loss.split('e').next().unwrap();
    assert_eq!(mantissa.replace(['.', '-'], "").len(), 17);
}

#[test]
fn metadata_reparses_to_the_same_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "experiment=multiclass_trace\nalgorithm=shu\nbeta=0.5\neta_effective=0.02\nexamples=200\ntau=3\nseed=5\n";
    fs::write(dir.path().join("m.cfg"), cfg).unwrap();
    let out = hypogd(&["run", "--config", "m.cfg", "--log-every", "20"], dir.path());
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let mut layers = hypogd_core::experiment::ConfigLayers::new();
    layers.apply_text(cfg).unwrap();
    layers.apply(&[("log_every".into(), "20".into())]).unwrap();
    let expected = layers.build().unwrap().resolve().unwrap();
    let echoed = ExperimentConfig::from_metadata(&csv).unwrap().resolve().unwrap();
    assert_eq!(echoed, expected);
    assert_eq!(data_rows(&csv).len(), 10);
    for row in data_rows(&csv) {
        let trace: f64 = row.split(',').nth(5).unwrap().parse().unwrap();
        assert!(trace <= 3.0 + 1e-9);
    }
}

#[test]
fn effective_rate_is_recorded_for_any_beta() {
    let dir = tempfile::tempdir().unwrap();
    let mut etas = Vec::new();
    for beta in ["0.3", "7"] {
        let out = hypogd(
            &[
                "run",
                "--set",
                "experiment=logit_dense",
                "--set",
                "algorithm=hu",
                "--set",
                &format!("beta={beta}"),
                "--set",
                "eta_effective=0.05",
                "--set",
                "horizon=20",
            ],
            dir.path(),
        );
        assert!(out.status.success());
        let csv = String::from_utf8(out.stdout).unwrap();
        assert_eq!(metadata_value(&csv, "derived.eta_effective"), Some("0.05"));
        let eta: f64 = metadata_value(&csv, "derived.eta").unwrap().parse().unwrap();
        let b: f64 = beta.parse().unwrap();
        assert!((eta * b - 0.05).abs() < 1e-15);
        etas.push(eta);
    }
    assert!(etas[0] > etas[1]);
}

#[test]
fn seed_precedence_is_flag_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.cfg"), "experiment=regret_linear\nalgorithm=gd\neta=0.1\nhorizon=20\nseed=1\n").unwrap();
    let seed_of = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hypogd"));
        cmd.args(["run", "--config", "r.cfg"]).current_dir(dir.path()).env_remove("HYPOGD_SEED");
        if let Some(e) = env {
            cmd.env("HYPOGD_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        let out = cmd.output().unwrap();
        assert!(out.status.success());
        let csv = String::from_utf8(out.stdout).unwrap();
        metadata_value(&csv, "seed").unwrap().to_string()
    };
    assert_eq!(seed_of(None, None), "1");
    assert_eq!(seed_of(Some("2"), None), "2");
    assert_eq!(seed_of(Some("2"), Some("3")), "3");
}

#[test]
fn parallel_jobs_match_serial_runs() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a", 1), ("b", 2), ("c", 3)] {
        fs::write(
            dir.path().join(format!("{name}.cfg")),
            format!("experiment=regret_linear\nalgorithm=hu\nbeta=1\neta=tuned\nhorizon=300\nseed={seed}\n"),
        )
        .unwrap();
    }
    let args = ["run", "--config", "a.cfg", "--config", "b.cfg", "--config", "c.cfg", "--output"];
    let serial = hypogd(&[&args[..], &["serial", "--jobs", "1"]].concat(), dir.path());
    let parallel = hypogd(&[&args[..], &["parallel", "--jobs", "3"]].concat(), dir.path());
    assert!(serial.status.success() && parallel.status.success());
    for name in ["a", "b", "c"] {
        let s = fs::read(dir.path().join("serial").join(format!("{name}.csv"))).unwrap();
        let p = fs::read(dir.path().join("parallel").join(format!("{name}.csv"))).unwrap();
        assert_eq!(s, p);
    }
}

#[test]
fn bad_configs_exit_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("two.cfg"), "experiment=logit_dense\nalgorithm=hu\nbeta=1\neta=0.1\neta_prime=0.1\n").unwrap();
    let out = hypogd(&["run", "--config", "two.cfg"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("exactly one"));

    let out = hypogd(&["run", "--config", "missing.cfg"], dir.path());
    assert!(!out.status.success());

    let out = hypogd(
        &["run", "--set", "experiment=logit_dense", "--set", "algorithm=hu", "--set", "beta=1e-300", "--set", "eta=1e300", "--set", "horizon=3"],
        dir.path(),
    );
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("round ") && err.contains("(omd)"), "{err}");
}

#[test]
fn verify_suites_report_and_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypogd(&["verify", "equivalence"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("PASS equivalence/") && l.contains("slack")));
    assert!(!hypogd(&["verify", "nonsense"], dir.path()).status.success());
}

#[test]
fn generate_logit_shape_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["generate", "logit", "--set", "dim=500", "--set", "rows=50", "--seed", "1", "--output"];
    assert!(hypogd(&[&args[..], &["a.csv"]].concat(), dir.path()).status.success());
    assert!(hypogd(&[&args[..], &["b.csv"]].concat(), dir.path()).status.success());
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    let header = a.lines().find(|l| !l.starts_with('#')).unwrap();
    let cols: Vec<&str> = header.split(',').collect();
    assert_eq!(cols.len(), 501);
    assert_eq!(*cols.last().unwrap(), "label");
    assert_eq!(data_rows(&a).len(), 50);
    assert_eq!(metadata_value(&a, "seed"), Some("1"));
}

#[test]
fn generate_multiclass_default_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = hypogd(&["generate", "multiclass", "--output", "m.csv"], dir.path());
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 200_000);
    let bad = hypogd(&["generate", "logit", "--output", "no/such/dir/x.csv"], dir.path());
    assert!(!bad.status.success());
}
