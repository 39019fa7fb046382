//! End-to-end runs of the `bergcurv` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const COMPARE: &str = r#"
schema = 1
task = "curvature-compare"
seed = 3

[family]
name = "hartogs_ball"

[metric]
name = "gaussian_weight"
params = { alpha = 1.0, beta = 1.0 }

[basis]
degree = 2

[quadrature]
angular = 64
radial = 16

[tgrid]
points = [[0.0, 0.0], [0.3, 0.2]]

[sections]
kind = "random"
count = 2
max_degree = 2
"#;

fn run(dir: &Path, toml: &str, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, toml).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bergcurv"));
    cmd.arg("--config").arg(&cfg).arg("--quiet").args(extra);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn compare_passes_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_arg(tmp.path(), "a"), out_arg(tmp.path(), "b"));
    let ra = run(tmp.path(), COMPARE, &["--out", &a], &[("BERGCURV_THREADS", "1")]);
    let rb = run(tmp.path(), COMPARE, &["--out", &b], &[("BERGCURV_THREADS", "3")]);
    assert_eq!(ra.status.code(), Some(0), "{}", String::from_utf8_lossy(&ra.stderr));
    assert_eq!(rb.status.code(), Some(0));
    let rec_a = std::fs::read(Path::new(&a).join("records.tsv")).unwrap();
    let rec_b = std::fs::read(Path::new(&b).join("records.tsv")).unwrap();
    assert_eq!(rec_a, rec_b);
    let text = String::from_utf8(rec_a).unwrap();
    assert!(text.starts_with("# bergcurv-records v1 task=curvature-compare"));
    // Header, column line, 2 base points x 2 tuples.
    assert_eq!(text.lines().count(), 2 + 4);
    assert!(Path::new(&a).join("summary.txt").exists());
}

#[test]
fn seed_override_changes_random_sections() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (out_arg(tmp.path(), "a"), out_arg(tmp.path(), "b"));
    assert_eq!(run(tmp.path(), COMPARE, &["--out", &a], &[]).status.code(), Some(0));
    assert_eq!(run(tmp.path(), COMPARE, &["--out", &b, "--seed", "99"], &[]).status.code(), Some(0));
    let rec = |d: &str| std::fs::read_to_string(Path::new(d).join("records.tsv")).unwrap();
    assert_ne!(rec(&a), rec(&b));
}

#[test]
fn unexpected_verdict_exits_one() {
    let tmp = TempDir::new().unwrap();
    let toml = r#"
schema = 1
task = "flatness-scan"
[family]
name = "hartogs_ball"
[metric]
name = "flat"
[basis]
degree = 2
[quadrature]
angular = 32
radial = 8
[tgrid]
points = [[0.1, 0.0]]
[flatness]
expect = "flat"
"#;
    let out = out_arg(tmp.path(), "o");
    let r = run(tmp.path(), toml, &["--out", &out], &[]);
    assert_eq!(r.status.code(), Some(1));
    assert!(std::fs::read_to_string(Path::new(&out).join("summary.txt")).unwrap().contains("FAIL"));
}

#[test]
fn config_errors_exit_two_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = out_arg(tmp.path(), "o");
    let bad_key = COMPARE.replace("seed = 3", "seed = 3\nbogus = 1");
    let bad_family = COMPARE.replace("hartogs_ball", "no_such_family");
    let bad_schema = COMPARE.replace("schema = 1", "schema = 7");
    for toml in [bad_key.as_str(), bad_family.as_str(), bad_schema.as_str(), "not toml ["] {
        let r = run(tmp.path(), toml, &["--out", &out], &[]);
        assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
        assert!(!Path::new(&out).exists());
    }
    let r = run(tmp.path(), COMPARE, &["--out", &out, "--task", "nonsense"], &[]);
    assert_eq!(r.status.code(), Some(2));
    let r = run(tmp.path(), COMPARE, &["--out", &out], &[("BERGCURV_THREADS", "zero")]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!Path::new(&out).exists());
}

#[test]
fn numerical_failure_exits_three() {
    let tmp = TempDir::new().unwrap();
    // Monomials up to degree 10 on a disk of radius 0.05 have norms spanning ~26 decades.
    let toml = r#"
schema = 1
task = "curvature-compare"
[family]
name = "product_disk"
params = { radius = 0.05 }
[metric]
name = "flat"
[basis]
degree = 10
[quadrature]
angular = 32
radial = 8
[tgrid]
points = [[0.0, 0.0]]
[sections]
kind = "monomials"
exponents = [[0]]
"#;
    let out = out_arg(tmp.path(), "o");
    let r = run(tmp.path(), toml, &["--out", &out], &[]);
    assert_eq!(r.status.code(), Some(3), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(std::fs::read_to_string(Path::new(&out).join("summary.txt")).unwrap().contains("numerical failure"));
}

#[test]
fn task_override_runs_trace_constant() {
    let tmp = TempDir::new().unwrap();
    let toml = COMPARE.replace("hartogs_ball", "product_disk").replace("gaussian_weight", "flat").replace("params = { alpha = 1.0, beta = 1.0 }", "");
    let out = out_arg(tmp.path(), "o");
    let r = run(tmp.path(), &toml, &["--out", &out, "--task", "trace-constant"], &[]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let rec = std::fs::read_to_string(Path::new(&out).join("records.tsv")).unwrap();
    assert!(rec.starts_with("# bergcurv-records v1 task=trace-constant"));
}
