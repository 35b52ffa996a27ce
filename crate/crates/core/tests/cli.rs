use std::path::Path;
use std::process::{Command, Output};

use krope::io::write_matrix;
use krope::mdp::{generate_garnet, GarnetParams};
use nalgebra::DMatrix;

fn krope(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krope")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn bad_configs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();
    let cases = [
        write(tmp.path(), "unknown.json", r#"{"trails": 3}"#),
        write(tmp.path(), "zero.json", r#"{"trials": 0}"#),
        write(tmp.path(), "dims.json", r#"{"dims": []}"#),
        write(tmp.path(), "alg.json", r#"{"algorithms": ["td-magic"]}"#),
        write(tmp.path(), "broken.json", "{not json"),
        tmp.path().join("missing.json").to_string_lossy().into_owned(),
    ];
    for cfg in &cases {
        let o = krope(&["garnet-sweep", "--config", cfg, "--out", out]);
        assert!(!o.status.success(), "{cfg} should be rejected");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    // diagnose without its file section is a config error too
    let o = krope(&["diagnose", "--out", out]);
    assert!(!o.status.success());
}

#[test]
fn diverged_trials_still_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "hot.json",
        r#"{"algorithms": ["fqe"], "dims": [4], "training": {"epochs": 30, "optimizer": "sgd", "learning_rate": 50.0}}"#,
    );
    let out = tmp.path().join("out");
    let o = krope(&["garnet-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--trials", "2", "--jobs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("garnet_sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| &r[5] == "diverged"));
    let summary = read_csv(&out.join("garnet_summary.csv"));
    assert!(!summary.is_empty());
    assert!(summary.iter().all(|r| r[6].parse::<f64>().unwrap() == 1.0), "divergence fraction column");
}

#[test]
fn seed_and_trials_flags_set_trial_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"algorithms": ["exact_krope"], "dims": [5]}"#);
    let out = tmp.path().join("out");
    let o = krope(&["garnet-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--trials", "3", "--seed", "40"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("garnet_sweep.csv"));
    let seeds: Vec<&str> = rows.iter().map(|r| r.get(2).unwrap()).collect();
    assert_eq!(seeds, ["40", "41", "42"]);
    let hash = &rows[0][0];
    assert_eq!(hash.len(), 64);
    assert!(rows.iter().all(|r| &r[0] == hash));
}

#[test]
fn diagnose_reports_one_row_for_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mdp = generate_garnet(GarnetParams { gamma: 0.9, ..Default::default() }, 4).unwrap();
    std::fs::write(tmp.path().join("mdp.json"), mdp.to_json().unwrap()).unwrap();
    // identity encoder over the 40 one-hot inputs
    write_matrix(tmp.path().join("enc.csv"), &DMatrix::identity(40, 40)).unwrap();
    let cfg = write(tmp.path(), "d.json", r#"{"diagnose": {"encoder": "enc.csv", "mdp": "mdp.json"}}"#);
    let out = tmp.path().join("out");
    let o = krope(&["diagnose", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(out.join("diagnose.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let col = |name: &str| rows[0][header.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
    assert!(col("spectral_radius") <= 0.9 + 1e-9);
    assert!(col("realizability_error") <= 1e-10);
}

#[test]
fn shipped_configs_parse() {
    use krope::experiments::{ExperimentConfig, ExperimentKind};
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, kind) in [
        ("garnet_sweep.json", ExperimentKind::GarnetSweep),
        ("sensitivity.json", ExperimentKind::GarnetSweep),
        ("counterexample.json", ExperimentKind::Counterexample),
        ("ope_trace.json", ExperimentKind::OpeTrace),
    ] {
        let text = std::fs::read_to_string(dir.join(file)).unwrap();
        let cfg = ExperimentConfig::from_json_for_kind(&text, kind).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(cfg.kind, kind);
    }
}
