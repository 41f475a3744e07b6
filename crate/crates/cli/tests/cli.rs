use std::path::PathBuf;
use std::process::{Command, Output};

fn dmh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmh")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn golden_examples_exit_codes() {
    for e in ["4", "5"] {
        let o = dmh(&["golden", e]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    // One published table entry is off by more than its tolerance.
    let o = dmh(&["golden", "3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL C+log pi 110"));
    let o = dmh(&["golden", "4", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["example"], 4);
    assert_eq!(dmh(&["golden", "7"]).status.code(), Some(2));
}

#[test]
fn experiment_writes_outputs_with_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(
        &cfg,
        r#"
[model]
kind = "varsel"
n = 60
p = 12

[[kernels]]
name = "rwmh"
family = "random-walk"
budget = 300

[[kernels]]
name = "imh"
family = "informed"
ell = "p"
big_l = "p^3"
budget = 100

[run]
n_runs = 4
inits = [{ kind = "empty" }]
master_seed = 11

[output]
formats = ["csv", "json"]
"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |workers: &str| {
        let o = dmh(&["experiment", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", workers]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(out.join("summary.csv")).unwrap()
    };
    let one = run("1");
    let header = one.lines().next().unwrap();
    assert!(header.starts_with("# dmh ") && header.contains(" config-sha256 "), "{header}");
    assert!(one.contains("kernel,init,budget,n_runs,success,h_true,time,t_true"));
    for f in ["runs.csv", "summary.json", "config.resolved.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // Worker count changes neither the hash nor the results.
    assert_eq!(one, run("3"));
}

#[test]
fn bad_config_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[model]\nkind = \"varsel\"\nn = 10\np = 5\nbogus = 1\n").unwrap();
    let o = dmh(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn certify_and_diagnose_small_spaces() {
    for c in ["certify-example3-rw.toml", "certify-example3-imh.toml"] {
        let o = dmh(&["certify", "--config", &config(c)]);
        assert_eq!(o.status.code(), Some(0), "{c}: {}", stdout(&o));
    }
    let o = dmh(&["certify", "--config", &config("certify-example3-rw.toml"), "--method", "drift", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["checks"].as_array().is_some_and(|c| !c.is_empty()));

    let dir = tempfile::tempdir().unwrap();
    let o = dmh(&["diagnose", "--config", &config("certify-example3-imh.toml"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let gap = v["gap"]["gap"].as_f64().unwrap();
    assert!(gap > 0.0 && gap <= 1.0, "{v}");
    assert!(dir.path().join("tv.csv").exists());
}
