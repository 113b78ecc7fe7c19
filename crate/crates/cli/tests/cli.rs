use std::fs;
use std::process::{Command, Output};

fn chainlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chainlab")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_a_study_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = chainlab(&["run", "--preset", "nonlinear", "--k", "10,20", "--seed", "3", "--out", out]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("PASS cli"));
    let csv = fs::read_to_string(dir.path().join("cli.csv")).unwrap();
    assert!(csv.starts_with("k,epsilon,n,tau,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn json_record_parses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = chainlab(&[
        "run", "--preset", "product", "--periodic", "--resolution", "16", "--k", "10", "--format", "json", "--out", out,
    ]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = fs::read_to_string(dir.path().join("cli.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 1);
    assert_eq!(v["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn config_file_scenarios_and_presets() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("lab.toml");
    fs::write(
        &config,
        r#"
[preset.gentle]
matrix = [[2, 1], [1, 1]]
nonlinearity = 0.1

[[scenario]]
id = "g"
preset = "gentle"
x = [0.4, 0.1, 0.7]
ks = [10, 20, 40]
seed = 2
target = { kind = "walk", min_len = 4, max_len = 8 }
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = chainlab(&["study", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    for f in ["study.csv", "tau.dat", "distances.dat"] {
        assert!(out.join("g").join(f).exists(), "{f}");
    }
    let missing = chainlab(&["run", "--config", config.to_str().unwrap(), "--id", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn classes_and_shadow_bench() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = chainlab(&["classes", "--preset", "product", "--resolution", "16", "--out", out]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("classes=1"));
    let csv = fs::read_to_string(dir.path().join("classes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16 * 16 * 16 + 1);

    let o = chainlab(&["shadow-bench", "--preset", "product", "--trials", "10", "--out", out]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 3);
}

#[test]
fn unknown_preset_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = chainlab(&["run", "--preset", "mystery", "--k", "10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mystery"));
}
