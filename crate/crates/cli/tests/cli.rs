use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const CONFIG: &str = r#"{
    "case_study": "policing",
    "horizon": 5,
    "monte_carlo": {"min_runs": 2, "max_runs": 4},
    "metrics": [{"criterion": "rpd", "mode": "avg_inc"}],
    "utilities": ["total_utility"],
    "objectives": [
        {"metric": "avg_inc_rpd", "direction": "minimize"},
        {"metric": "total_utility", "direction": "maximize"}
    ],
    "parameters": [
        {"name": "discovery_rate_hot", "kind": "environmental", "values": [0.5, 0.9]},
        {"name": "discovery_rate_other", "kind": "environmental", "values": [0.0, 0.1, 0.2]},
        {"name": "effect_range", "kind": "system", "values": [1, 2]}
    ],
    "policing": {"grid_size": 8, "hotspot_count": 8},
    "seed": 11
}"#;

fn loopfair(args: &[&str], epoch: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_loopfair"));
    cmd.args(args).env_remove("SOURCE_DATE_EPOCH");
    if let Some(e) = epoch {
        cmd.env("SOURCE_DATE_EPOCH", e);
    }
    cmd.output().expect("binary runs")
}

fn digests(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, hex::encode(Sha256::digest(fs::read(&p).unwrap())))
        })
        .collect()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("experiment.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_is_byte_identical_across_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let oa = loopfair(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--jobs", "1"], Some("1700000000"));
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = loopfair(&["run", "--config", &cfg, "--out", b.to_str().unwrap(), "--jobs", "4"], Some("1700000000"));
    assert!(ob.status.success());
    let (da, db) = (digests(&a), digests(&b));
    assert_eq!(da.len(), 8, "{da:?}");
    assert_eq!(da, db);
}

#[test]
fn seed_flag_overrides_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(loopfair(&["simulate", "--config", &cfg, "--out", a.to_str().unwrap()], None).status.success());
    assert!(loopfair(&["simulate", "--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "12"], None)
        .status
        .success());
    let (da, db) = (digests(&a), digests(&b));
    assert_eq!(da["configs.csv"], db["configs.csv"]);
    assert_ne!(da["campaign.csv"], db["campaign.csv"]);
}

#[test]
fn stages_individually() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    let r = loopfair(&["analyze", "--config", &cfg, "--out", o], None);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("campaign.csv"));
    assert!(loopfair(&["enumerate", "--config", &cfg, "--out", o], None).status.success());
    let rows = fs::read_to_string(out.join("configs.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 12);
    assert!(loopfair(&["simulate", "--config", &cfg, "--out", o], None).status.success());
    assert!(loopfair(&["analyze", "--config", &cfg, "--out", o], None).status.success());
    assert!(loopfair(&["pareto", "--config", &cfg, "--out", o], None).status.success());
    let md = fs::read_to_string(out.join("sensitivity.md")).unwrap();
    assert!(md.contains("R² = "));
    assert!(out.join("pareto.dat").exists());
}

#[test]
fn sample_subcommand_covers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let out = tmp.path().join("s");
    let o = out.to_str().unwrap();
    assert!(!loopfair(&["sample", "--config", &cfg, "--out", o], None).status.success());
    assert!(loopfair(&["sample", "--config", &cfg, "--out", o, "--strength", "2"], None).status.success());
    let rows = fs::read_to_string(out.join("configs.csv")).unwrap().lines().count() - 1;
    assert!((6..12).contains(&rows), "{rows}");
}

#[test]
fn bad_config_exits_nonzero_with_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &CONFIG.replace(r#""horizon": 5"#, r#""horizon": 5, "horizn": 3"#));
    let r = loopfair(&["run", "--config", &cfg], None);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("horizn"));
    let r = loopfair(&["run", "--config", "/nonexistent/x.json"], None);
    assert!(!r.status.success());
}
