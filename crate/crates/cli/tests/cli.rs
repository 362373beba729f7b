use std::path::Path;
use std::process::Command;

use geoaudit::bundle::{save_bundle, EmbeddingSet, ModelBundle, ModelHead};
use geoaudit::synthetic::{gaussian_clusters, ClusterConfig};
use geoaudit::Matrix;

fn small_bundle() -> ModelBundle {
    let cfg = ClusterConfig {
        train_per_class: 30,
        eval_per_class: 20,
        ..Default::default()
    };
    gaussian_clusters(&cfg).bundle
}

fn geoaudit(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_geoaudit")).args(args).output().expect("spawn")
}

fn write(bundle: &ModelBundle, dir: &Path) -> String {
    save_bundle(bundle, dir).unwrap();
    dir.to_str().unwrap().to_string()
}

#[test]
fn score_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(&small_bundle(), dir.path());
    let one = geoaudit(&["score", "--bundle", &b]);
    let two = geoaudit(&["score", "--bundle", &b, "--threads", "3"]);
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, two.stdout);
    assert_eq!(String::from_utf8_lossy(&one.stdout).lines().count(), 67);
}

#[test]
fn regions_require_seed_and_repeat() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(&small_bundle(), dir.path());
    let out = geoaudit(&["regions", "--bundle", &b]);
    assert_eq!(out.status.code(), Some(2));
    let args = ["regions", "--bundle", &b, "--seed", "4", "--mc-samples", "4000"];
    let one = geoaudit(&args);
    let two = geoaudit(&args);
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, two.stdout);
    let v: serde_json::Value = serde_json::from_slice(&one.stdout).unwrap();
    assert!(v["pairs"].is_array());
}

#[test]
fn missing_eval_set_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut bundle = small_bundle();
    bundle.eval = None;
    let b = write(&bundle, dir.path());
    let out = geoaudit(&["score", "--bundle", &b]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    let out = geoaudit(&["score", "--bundle", "/nonexistent/bundle"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_rows_fail_bounds_with_compute_error() {
    let dir = tempfile::tempdir().unwrap();
    let w = Matrix::from_vec(3, 2, vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
    let train = EmbeddingSet {
        x: Matrix::from_vec(3, 2, vec![1.0, 0.0, 0.5, 0.1, 0.0, 1.0]).unwrap(),
        labels: Some(vec![0, 1, 2]),
    };
    let b = write(&ModelBundle::new(ModelHead::new(w, vec![0.0; 3]), train, None), dir.path());
    let out = geoaudit(&["bounds", "--bundle", &b]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bounds_report_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(&small_bundle(), dir.path());
    let csv = dir.path().join("curves.csv");
    let out = geoaudit(&["bounds", "--bundle", &b, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("rho = "));
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 52);
    assert!(text.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn gate_threshold_extremes() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(&small_bundle(), dir.path());
    let all = geoaudit(&["gate", "--bundle", &b, "--tau", "-1"]);
    assert!(all.status.success(), "{}", String::from_utf8_lossy(&all.stderr));
    let text = String::from_utf8(all.stdout).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["decision"], "abstain", "{line}");
        assert!(v["explanation"].is_string());
    }
    let none = geoaudit(&["gate", "--bundle", &b, "--tau", "1e300"]);
    let text = String::from_utf8(none.stdout).unwrap();
    let abstained = text.lines().filter(|l| l.contains("\"abstain\"")).count();
    // Only sentinel scores exceed a huge finite threshold.
    let score = String::from_utf8(geoaudit(&["score", "--bundle", &b]).stdout).unwrap();
    let sentinels = score
        .lines()
        .filter(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["zeta"].as_f64().unwrap() > 1e300)
        .count();
    assert_eq!(abstained, sentinels);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let b = write(&small_bundle(), &dir.path().join("b"));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"tau": -1}"#).unwrap();
    let out = geoaudit(&["gate", "--bundle", &b, "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().lines().all(|l| l.contains("\"abstain\"")));
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    let out = geoaudit(&["gate", "--bundle", &b, "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detector_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cb = gaussian_clusters(&ClusterConfig::default());
    let b = write(&cb.bundle, &dir.path().join("b"));
    let out = geoaudit(&["score", "--bundle", &b]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let (mut pos, mut neg) = (String::new(), String::new());
    for (line, ood) in text.lines().zip(&cb.ood) {
        let t = if *ood { &mut pos } else { &mut neg };
        t.push_str(line);
        t.push('\n');
    }
    let p = dir.path().join("pos.jsonl");
    let n = dir.path().join("neg.jsonl");
    let m = dir.path().join("model.json");
    std::fs::write(&p, pos).unwrap();
    std::fs::write(&n, neg).unwrap();
    let (ps, ns, ms) = (p.to_str().unwrap(), n.to_str().unwrap(), m.to_str().unwrap());
    let out = geoaudit(&["detector", "train", "--positive", ps, "--negative", ns, "--out", ms]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = geoaudit(&["detector", "eval", "--model", ms, "--positive", ps, "--negative", ns]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["auroc"].as_f64().unwrap() > 0.95);
}

fn labeled_train(n: usize, f: usize, per: usize) -> EmbeddingSet {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 0..n * per {
        x.extend((0..f).map(|c| ((k * 7 + c * 3) % 11) as f64 / 11.0 - 0.5));
        y.push((k % n) as u32);
    }
    EmbeddingSet {
        x: Matrix::from_vec(n * per, f, x).unwrap(),
        labels: Some(y),
    }
}

#[test]
fn bounds_table_for_equidistant_rows() {
    let dir = tempfile::tempdir().unwrap();
    let s = 0.876 / 2f64.sqrt();
    let mut w = vec![0.0; 100];
    for k in 0..10 {
        w[k * 10 + k] = s;
    }
    let head = ModelHead::new(Matrix::from_vec(10, 10, w).unwrap(), vec![0.0; 10]);
    let b = write(&ModelBundle::new(head, labeled_train(10, 10, 1), None), dir.path());
    let out = geoaudit(&["bounds", "--bundle", &b]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rho = 0.876"), "{text}");
    let row = text.lines().find(|l| l.starts_with("0.9\t")).unwrap();
    let delta: f64 = row.split('\t').nth(1).unwrap().parse().unwrap();
    assert!((delta - 5.02).abs() < 0.01, "{row}");
}

#[test]
fn regions_skip_enumeration_above_limit() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = Vec::new();
    for k in 0..15 {
        w.extend((0..15).map(|c| if c == k { 1.0 } else { ((k + 2 * c) % 5) as f64 * 0.05 }));
    }
    let head = ModelHead::new(Matrix::from_vec(15, 15, w).unwrap(), vec![0.0; 15]);
    let b = write(&ModelBundle::new(head, labeled_train(15, 15, 2), None), dir.path());
    let out = geoaudit(&["regions", "--bundle", &b, "--seed", "1", "--mc-samples", "2000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let warnings = v["warnings"].to_string();
    assert!(warnings.contains("exceeds"), "{warnings}");
    assert!(v["high_confidence"]["slab_union"].is_object(), "{}", v["high_confidence"]);
}

#[test]
fn detector_missing_input_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pos.jsonl");
    std::fs::write(&p, "").unwrap();
    let missing = dir.path().join("none.jsonl");
    let out = geoaudit(&["detector", "train", "--positive", p.to_str().unwrap(), "--negative", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
