use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, config: &str, extra: &[&str], env_out: Option<&Path>) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparsecond"));
    cmd.arg("--config").arg(&cfg).args(extra).current_dir(dir);
    match env_out {
        Some(p) => cmd.env("SPARSECOND_OUT", p),
        None => cmd.env_remove("SPARSECOND_OUT"),
    };
    cmd.output().unwrap()
}

#[test]
fn malformed_covariance_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        "command = \"expect-roots\"\n[[ensemble]]\nsupport = [[0], [1], [2], [3]]\ncovariance = [1.0, 2.0, 3.0]\n",
        &[],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ensemble[0].covariance"), "{err}");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "command = \"nu-lin\"\ntrails = 10\n", &[], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_command_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "command = \"frobnicate\"\n", &[], None);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let cfg = "command = \"nu-lin\"\nn = 1\ntrials = 200\neps = [0.5]\n";
    let out = run(dir.path(), cfg, &[], Some(&target));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(target.join("nu-lin.csv")).unwrap();
    assert!(csv.starts_with("schema_version"));
    assert!(target.join("nu-lin.json").exists());

    let flag = dir.path().join("from-flag");
    let out = run(dir.path(), cfg, &["--out", flag.to_str().unwrap()], Some(&target));
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(flag.join("nu-lin.csv")).unwrap(), csv);
}

#[test]
fn seed_override_changes_the_sample() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "command = \"nu-lin\"\nn = 2\ntrials = 500\neps = [0.6]\n";
    let a = run(dir.path(), cfg, &["--out", "a", "--seed", "3"], None);
    let b = run(dir.path(), cfg, &["--out", "b", "--seed", "4"], None);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}
