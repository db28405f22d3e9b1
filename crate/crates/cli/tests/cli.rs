use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hormander_lab_cli::config::{ExperimentConfig, ExperimentKind, ModelConfig};
use hormander_lab_cli::report::Payload;
use hormander_lab_cli::ExperimentReport;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hormander-lab"))
}

fn small(kind: ExperimentKind) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.model = ModelConfig { d: 1, n_per_axis: 64, side_length: 64.0 };
    c
}

fn write_config(dir: &TempDir, name: &str, c: &ExperimentConfig) -> PathBuf {
    let path = dir.path().join(name);
    let text = if name.ends_with(".toml") { c.to_toml().unwrap() } else { c.to_json() };
    std::fs::write(&path, text).unwrap();
    path
}

fn run_with(config: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg("--config").arg(config).args(extra).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn list_prints_every_experiment() {
    let o = bin().arg("list").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for kind in ExperimentKind::ALL {
        assert!(text.contains(kind.name()), "missing {kind}");
    }
}

#[test]
fn list_json_is_structured() {
    let o = bin().args(["list", "--json"]).output().unwrap();
    assert!(o.status.success());
    let entries: Vec<Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(entries.len(), 6);
    for e in &entries {
        assert!(!e["anchor"].as_str().unwrap().is_empty());
        assert!(!e["parameters"].as_array().unwrap().is_empty());
    }
}

#[test]
fn certify_space_reports_annulus_constant_near_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "space.json", &ExperimentConfig::new(ExperimentKind::CertifySpace));
    let out = dir.path().join("space-report.json");
    let o = run_with(&cfg, &["--out", out.to_str().unwrap(), "--assert"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = ExperimentReport::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let Payload::CertifySpace { certificate } = &report.payload else { panic!("wrong payload") };
    let c = certificate.annulus.best_constant;
    assert!((c - 2.0).abs() <= 0.25, "annulus constant {c}");
    assert!(out.with_extension("csv").exists());
}

#[test]
fn lemma_with_divergent_exponent_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::LemmaProfile);
    c.b = Some(0.5);
    let cfg = write_config(&dir, "lemma.json", &c);
    let o = run_with(&cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("b > d/2"), "{}", stderr(&o));
}

#[test]
fn violated_assertion_exits_two_and_plain_run_exits_zero() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::LemmaProfile);
    c.thresholds.lemma_variation_max = 1.0;
    let cfg = write_config(&dir, "strict.json", &c);
    let out = dir.path().join("r.json");
    let o = run_with(&cfg, &["--assert", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("FAIL"));
    let o = run_with(&cfg, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn unknown_kind_and_schema_are_input_errors() {
    let dir = TempDir::new().unwrap();
    let mut v: Value = serde_json::from_str(&small(ExperimentKind::CertifySpace).to_json()).unwrap();
    v["kind"] = "no-such-experiment".into();
    let bad_kind = dir.path().join("kind.json");
    std::fs::write(&bad_kind, v.to_string()).unwrap();
    assert_eq!(run_with(&bad_kind, &[]).status.code(), Some(1));

    let mut v: Value = serde_json::from_str(&small(ExperimentKind::CertifySpace).to_json()).unwrap();
    v["schema_version"] = 99.into();
    let bad_schema = dir.path().join("schema.json");
    std::fs::write(&bad_schema, v.to_string()).unwrap();
    let o = run_with(&bad_schema, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("schema"), "{}", stderr(&o));

    let mut v: Value = serde_json::from_str(&small(ExperimentKind::CertifySpace).to_json()).unwrap();
    v["unexpected_field"] = 1.into();
    let extra = dir.path().join("extra.json");
    std::fs::write(&extra, v.to_string()).unwrap();
    assert_eq!(run_with(&extra, &[]).status.code(), Some(1));

    assert_eq!(run_with(&dir.path().join("missing.json"), &[]).status.code(), Some(1));
}

#[test]
fn unwritable_output_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.json", &small(ExperimentKind::CertifySpace));
    let out = dir.path().join("no-such-dir").join("r.json");
    let o = run_with(&cfg, &["--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot write"));
}

#[test]
fn toml_and_json_configs_give_the_same_report() {
    let dir = TempDir::new().unwrap();
    let c = small(ExperimentKind::CzProfile);
    let reports: Vec<ExperimentReport> = ["c.json", "c.toml"]
        .iter()
        .map(|name| {
            let cfg = write_config(&dir, name, &c);
            let o = run_with(&cfg, &[]);
            assert!(o.status.success(), "{}", stderr(&o));
            ExperimentReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap()
        })
        .collect();
    assert_eq!(reports[0].reproducible_json(), reports[1].reproducible_json());
}

#[test]
fn echoed_config_reruns_to_the_same_payload() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::RboundScaling);
    c.n_terms = Some(3);
    c.thetas = Some(vec![0.0, 0.5, 1.0, 1.4]);
    let cfg = write_config(&dir, "r.json", &c);
    let first = ExperimentReport::from_json(&String::from_utf8(run_with(&cfg, &[]).stdout).unwrap()).unwrap();
    let echoed = ExperimentConfig::from_toml(&first.config.to_toml().unwrap()).unwrap();
    assert_eq!(echoed, first.config);
    let cfg2 = write_config(&dir, "echo.json", &echoed);
    let second = ExperimentReport::from_json(&String::from_utf8(run_with(&cfg2, &[]).stdout).unwrap()).unwrap();
    assert_eq!(first.reproducible_json(), second.reproducible_json());
}

#[test]
fn seed_flag_overrides_config_and_thread_count_does_not_matter() {
    let dir = TempDir::new().unwrap();
    let mut c = small(ExperimentKind::RboundScaling);
    c.n_terms = Some(3);
    c.thetas = Some(vec![0.0, 0.5, 1.0, 1.4]);
    c.budget.method = hormander_lab::rbounds::Method::MonteCarlo;
    c.budget.mc_samples = 2000;
    let cfg = write_config(&dir, "s.json", &c);
    let report = |extra: &[&str]| {
        let o = run_with(&cfg, extra);
        assert!(o.status.success(), "{}", stderr(&o));
        ExperimentReport::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap()
    };
    let a = report(&["--seed", "5", "--threads", "1"]);
    let b = report(&["--seed", "5", "--threads", "3"]);
    assert_eq!(a.provenance.seed, 5);
    assert_eq!(a.reproducible_json(), b.reproducible_json());
}
