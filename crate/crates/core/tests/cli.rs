use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ggn-lab"))
}

fn config(name: &str) -> String {
    format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn header_of(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn simulate_writes_summary_with_tool_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["simulate", "--config", &config("mm1.toml"), "--events", "50000", "--seed", "3", "--json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tool"]["name"], "ggn-lab");
    assert_eq!(summary["tool"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["tool"]["config_hash"].as_str().unwrap().len(), 16);
    let stdout: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, summary);
}

#[test]
fn verify_and_sweep_csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["verify", "--config", &config("verify_gamma.toml"), "--events", "200000", "--out"])
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert!(status.code() == Some(0) || status.code() == Some(1));
    let h = header_of(&dir.path().join("verify.csv"));
    assert!(h.starts_with(&format!("# ggn-lab {} config_hash=", env!("CARGO_PKG_VERSION"))), "{h}");

    let out = bin()
        .args(["sweep", "--config", &config("sweep.toml"), "--events", "20000", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("# ggn-lab "));
    assert!(csv.lines().nth(1).unwrap().starts_with("regime,c,rho,n,"));
}

#[test]
fn bounds_prints_table() {
    let out = bin().args(["bounds", "--config", &config("hetero.toml")]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("bound,value,applicable,flags"), "{text}");
    assert!(text.contains("hetero_main"));
}

#[test]
fn missing_config_is_an_error() {
    let out = bin().args(["simulate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["simulate", "--config", "/nonexistent.toml"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[model]\narrival = { family = \"exponential\", rate = 1.0 }\nservice = { family = \"weibull\" }\nn = 2\n").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn reproduce_without_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["reproduce", "--events", "20000", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    let csv = std::fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.contains("example:nbue_erlang2"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = bin()
            .args(["simulate", "--config", &config("verify_gamma.toml"), "--events", "100000", "--out"])
            .arg(d.path())
            .output()
            .unwrap();
        assert!(out.status.code() == Some(0) || out.status.code() == Some(1));
    }
    for f in ["summary.json", "verify.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
