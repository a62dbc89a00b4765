//! End-to-end runs of the binary: output artifacts, config round trips and exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_quadric-lab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("quadric-lab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn hash_line(text: &str) -> String {
    text.lines().find(|l| l.starts_with("# config-hash:")).unwrap().to_string()
}

#[test]
fn count_writes_header_and_rows() {
    let out = bin().args(["count", "--form", "1,1,-1", "--m", "1", "--norm", "euclidean", "--T", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# quadric-lab count\n"));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body, ["T,count", "5.0,44"]);
}

#[test]
fn saved_config_reproduces_the_artifact() {
    let (cfg, first, second) = (scratch("zeta.cfg"), scratch("zeta1.csv"), scratch("zeta2.csv"));
    let status = bin()
        .args(["zeta", "--tau", "1.5:2.5:0.5", "--cutoff", "1e4", "--save-config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = bin().args(["zeta", "--config"]).arg(&cfg).arg("--out").arg(&second).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let (a, b) = (std::fs::read_to_string(&first).unwrap(), std::fs::read_to_string(&second).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 4);

    // A flag overrides the file and changes the hash.
    let third = bin().args(["zeta", "--cutoff", "2e4", "--config"]).arg(&cfg).output().unwrap();
    let c = String::from_utf8(third.stdout).unwrap();
    assert_ne!(hash_line(&a), hash_line(&c));
    assert!(c.contains("# cutoff=2e4"));
}

#[test]
fn json_output_is_one_object_per_line() {
    let out = bin().args(["equidist", "--s", "4,8", "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<serde_json::Value> =
        text.lines().filter(|l| !l.starts_with('#')).map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    for key in ["s", "T", "orbit_integral", "log_term", "Dplus", "Dminus", "residual"] {
        assert!(rows[0].get(key).is_some(), "missing {key}");
    }
    assert!(rows[1]["residual"].as_f64().unwrap().abs() < rows[0]["residual"].as_f64().unwrap().abs());
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let code = |args: &[&str]| bin().args(args).output().unwrap().status.code();
    assert_eq!(code(&["decompose", "--matrix", "2,1,1,1", "--mode", "khu"]), Some(0));
    assert_eq!(code(&["count", "--norm", "taxicab"]), Some(2));
    assert_eq!(code(&["count", "--bogus", "1"]), Some(2));
    assert_eq!(code(&["count", "--form", "1,1,0", "--T", "5"]), Some(4));
    let bad = scratch("bad.cfg");
    std::fs::write(&bad, "command=count\nunknown_key=3\n").unwrap();
    let out = bin().args(["count", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unknown_key"));
    assert!(out.stdout.is_empty());
}
