use std::fs;
use std::path::Path;
use std::process::Command;

fn spde() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spde"))
}

const SMALL: &str = r#"
[problem]
preset = "white_mult"
m = 8

[experiment]
schemes = ["implicit_euler", "modified_splitting(2)"]
n_ladder = [2, 4, 8]
n_fine = 32
samples = 4
seed = 1
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_writes_report_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let status = spde()
        .args(["run", cfg.to_str().unwrap(), "--seed", "9", "--samples", "3", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["errors.csv", "summary.csv", "rates.json", "plot.dat", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["config"]["experiment"]["samples"], 3);
    let rows = fs::read_to_string(out.join("errors.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 2 * 3 * 3);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("n_ladder = [2, 4, 8]", "n_ladder = [3]"));
    let out = spde().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let missing = spde().args(["run", dir.path().join("nope.toml").to_str().unwrap()]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let cfg = write_config(dir.path(), &SMALL.replace("white_mult", "nonexistent"));
    let out = spde().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[problem]
[problem.spec]
f = "exp(exp(u))"
g = "0"
u0 = "5"
m = 4

[experiment]
schemes = ["implicit_euler"]
n_ladder = [2]
n_fine = 4
samples = 1
seed = 0
"#;
    let cfg = write_config(dir.path(), text);
    let out = spde().args(["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_passes() {
    let out = spde().arg("verify").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}

#[test]
fn presets_are_listed() {
    let out = spde().arg("presets").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["white_mult", "trace_additive", "local_lipschitz"] {
        assert!(text.contains(name));
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = spde_core::ExperimentConfig::load(&path).unwrap();
            cfg.build_problem().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
