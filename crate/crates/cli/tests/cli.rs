use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvkvn"))
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn cvkvn")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p
}

fn oscillator(t: f64, n_steps: u32, extra: &str) -> String {
    oscillator_with_order(t, n_steps, 2, extra)
}

fn oscillator_with_order(t: f64, n_steps: u32, order: u32, extra: &str) -> String {
    format!(
        r#"{{
  "version": 1,
  "hamiltonian": {{"n": 1, "polynomial": "1/2*x1^2 + 1/2*x2^2"}},
  "initial_density": {{"mean": [1.0, 0.0], "covariance": [[0.5, 0.0], [0.0, 0.5]]}},
  "grid": {{"points_per_mode": 64, "half_extent": 8.0}},
  "evolution": {{"t": {t}, "n_steps": {n_steps}, "order": {order}}},
  "sampling": {{"num_samples": 200, "seed": 3}}{extra}
}}"#
    )
}

fn moments(dir: &Path) -> Vec<(String, f64)> {
    fs::read_to_string(dir.join("moments.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (format!("{}{}{}", f[0], f[1], f[2]), f[3].parse().unwrap())
        })
        .collect()
}

fn lookup(m: &[(String, f64)], key: &str) -> f64 {
    m.iter().find(|(k, _)| k == key).unwrap().1
}

#[test]
fn identities_pass() {
    let o = run(&["identities"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("decomposition identities: 19/19 PASS"), "{s}");
    assert!(s.contains("product rule: 40/40 PASS"), "{s}");
}

#[test]
fn oscillator_step_is_two_shears() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &oscillator_with_order(0.5, 1, 1, ""));
    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let step = fs::read_to_string(dir.path().join("step.gates")).unwrap();
    let gates: Vec<&str> = step.lines().skip(1).collect();
    assert_eq!(gates.len(), 2, "{step}");
    assert!(gates.iter().all(|g| g.starts_with("CX ")), "{step}");
    assert!(dir.path().join("kvn.txt").exists());
}

#[test]
fn zero_time_circuit_is_empty() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &oscillator(0.0, 4, ""));
    let o = run(&["synth", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let listing: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_owned)
        .collect();
    assert_eq!(listing, vec!["modes 2".to_string()]);
}

#[test]
fn quartic_synth_uses_expected_gates() {
    let cfg = config_path("quartic.json");
    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--dump-kvn"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("# ")));
    for kind in ["Q4 ", "CX ", "F ", "Fdg "] {
        assert!(s.lines().any(|l| l.starts_with(kind)), "missing {kind}");
    }
}

#[test]
fn evolve_oscillator_quarter_period() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_path("harmonic.json");
    let o = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = moments(dir.path());
    assert!(lookup(&m, "mean1").abs() < 1e-3);
    assert!((lookup(&m, "mean2") + 1.0).abs() < 1e-3);
    for f in ["density.csv", "samples.csv", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn gaussian_backend_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &oscillator(std::f64::consts::FRAC_PI_2, 1, r#", "backend": "gaussian""#));
    let o = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let m = moments(dir.path());
    assert!(lookup(&m, "mean1").abs() < 1e-12);
    assert!((lookup(&m, "mean2") + 1.0).abs() < 1e-12);
    assert!((lookup(&m, "cov11") - 0.5).abs() < 1e-12);
    assert!(lookup(&m, "cov12").abs() < 1e-12);
}

#[test]
fn zero_time_density_matches_initial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &oscillator(0.0, 1, ""));
    let o = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * 0.5);
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let expected = norm * (-((f[0] - 1.0).powi(2) + f[1].powi(2)) / (2.0 * 0.5)).exp();
        assert!((f[2] - expected).abs() <= 1e-12, "{line}");
    }
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), &oscillator(1.0, 20, ""));
    for d in [&a, &b] {
        let o = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    for f in ["density.csv", "moments.csv", "samples.csv", "summary.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn verify_oscillator_against_liouville() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &oscillator(1.0, 40, r#", "verify": {"reference": "liouville", "dt": 0.001}"#),
    );
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(report.contains("total_variation") && report.contains("PASS"));
}

#[test]
fn self_reference_has_zero_distance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &oscillator(0.7, 5, r#", "verify": {"reference": "self"}"#));
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("total_variation = 0e0"), "{}", stdout(&o));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &oscillator(1.0, 4, "").replace("1/2*x1^2 + 1/2*x2^2", "x1*x2"),
    );
    let o = run(&["synth", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hamiltonian"));
    let missing = run(&["synth", "--config", dir.path().join("absent.json").to_str().unwrap()]);
    assert_ne!(missing.status.code(), Some(0));
}

#[test]
fn threshold_breach_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &oscillator(1.0, 1, r#", "verify": {"reference": "liouville", "max_total_variation": 1e-12}"#),
    );
    let o = run(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
}
