use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_smalljump"))
}

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const METRICS: &str = r#"
kind = "metrics"
eps = [0.1, 0.01]

[model]
name = "alpha_stable_like"
params = { alpha = 1.0 }
"#;

#[test]
fn metrics_run_writes_labelled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", METRICS);
    let out = bin()
        .args(["--config", cfg.to_str().unwrap(), "--label", "x", "--out", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let path = String::from_utf8(out.stdout).unwrap();
    let path = path.lines().next().unwrap();
    assert!(path.ends_with("metrics_alpha_stable_like_x.csv"), "{path}");
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# smalljump metrics schema v1"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "m.toml", METRICS);
    let st = bin().args(["--config", cfg.to_str().unwrap(), "--kind", "bogus"]).status().unwrap();
    assert_eq!(st.code(), Some(1));
    assert_eq!(bin().status().unwrap().code(), Some(1));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(bin().args(["--config", missing.to_str().unwrap()]).status().unwrap().code(), Some(2));

    let bad = write(dir.path(), "bad.toml", "kind = \"metrics\"\neps = [0.1]\ncolour = 3\n[model]\nname = \"brownian\"\n");
    let out = bin().args(["--config", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    let model = write(dir.path(), "model.toml", "kind = \"metrics\"\neps = [0.1]\n[model]\nname = \"nosuch\"\n");
    assert_eq!(bin().args(["--config", model.to_str().unwrap()]).status().unwrap().code(), Some(2));
}

#[test]
fn unreachable_budget_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.toml",
        r#"
kind = "select_eps"
label = "s"
bounds = ["T1"]
budgets = [1e-12]
eps_range = [0.01, 1.0]

[model]
name = "alpha_stable_like"
params = { alpha = 1.0 }
"#,
    );
    let st = bin()
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(4));
}

#[test]
fn overrides_change_seed_and_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "v.toml",
        r#"
kind = "verify"
label = "v"
eps = [0.1]
n_paths = 500
n_steps = 16
seed = 1
bounds = ["T1"]

[model]
name = "cgmy"
b = 0.2
params = { C = 1.0, G = 5.0, M = 5.0, Y = 1.2 }
"#,
    );
    let run = |seed: &str| {
        let out = bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
            .args(["--seed", seed, "--paths", "800"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let path = String::from_utf8(out.stdout).unwrap();
        std::fs::read_to_string(path.trim()).unwrap()
    };
    let a = run("5");
    assert!(a.contains(",800,5,"), "{a}");
    assert_eq!(a, run("5"));
    assert_ne!(a, run("6"));
}
