use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ase_fd(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ase-fd"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = ase_fd(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().find(|l| l.starts_with("error: ")).expect("error line");
    serde_json::from_str(&line["error: ".len()..]).unwrap()
}

const TINY: &[&str] = &["--subjects", "3", "--trials", "6", "--epochs", "1", "--patience", "1"];

#[test]
fn full_sweep_has_one_summary_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--alphas", "0..7", "--classifiers", "svm,knn", "--ase", "both"];
    args.extend_from_slice(TINY);
    ok(dir.path(), &args);
    let report = fs::read_to_string(dir.path().join("sweep_report.csv")).unwrap();
    let means = report.lines().filter(|l| l.split(',').nth(5) == Some("mean")).count();
    assert_eq!(means, 32, "{report}");
    let table = fs::read_to_string(dir.path().join("sweep_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 2 + 8);
    assert_eq!(lines.count(), 4);
    let run: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "sweep");
    assert_eq!(run["config"]["alphas"].as_array().unwrap().len(), 8);
}

#[test]
fn job_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec!["sweep", "--alphas", "3,6", "--seed", "11"];
    args.extend_from_slice(TINY);
    let mut one = args.clone();
    one.extend(["--jobs", "1"]);
    let mut two = args;
    two.extend(["--jobs", "2"]);
    ok(a.path(), &one);
    ok(b.path(), &two);
    for f in ["sweep_report.csv", "sweep_table.csv", "sweep_report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cost_table_tracks_reference_within_seven_percent() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["cost", "--reference-mflops"]);
    let mut rdr = csv::Reader::from_path(dir.path().join("cost.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (src, be, re) = (col("source"), col("battery_rel_err"), col("response_rel_err"));
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[src] == "reference" {
            assert!(rec[be].parse::<f64>().unwrap() <= 0.07, "{rec:?}");
            assert!(rec[re].parse::<f64>().unwrap() <= 0.07, "{rec:?}");
            checked += 1;
        }
    }
    assert_eq!(checked, 8);
}

#[test]
fn enhancing_an_enhanced_frame_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["ingest", "--subjects", "2", "--trials", "6", "--alpha", "4"]);
    ok(d, &["train-ase", "--subjects", "2", "--trials", "6", "--alpha", "4", "--epochs", "1"]);
    let frames = d.join("frames_alpha4");
    let lr = fs::read_dir(&frames)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with("_lr.asef"))
        .unwrap();
    let model = d.join("ase_alpha4.asem");
    ok(d, &["enhance", "--model", model.to_str().unwrap(), "--frame", lr.to_str().unwrap()]);
    let stem = lr.file_stem().unwrap().to_str().unwrap();
    let enhanced = d.join(format!("{stem}_enhanced.asef"));
    assert!(enhanced.exists());
    let o = ase_fd(d, &["enhance", "--model", model.to_str().unwrap(), "--frame", enhanced.to_str().unwrap()]);
    assert!(!o.status.success());
    let e = error_line(&o);
    assert_eq!(e["command"], "enhance");
    assert_eq!(e["kind"], "geometry_mismatch");
}

#[test]
fn every_config_violation_is_listed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"alphas": [2, 8], "dropout_p": -0.5, "jobs": 0, "synthetic": {"subjects": 1}}"#).unwrap();
    let o = ase_fd(dir.path(), &["--config", cfg.to_str().unwrap(), "sweep", "--classifiers", "svm,tree"]);
    assert_eq!(o.status.code(), Some(2));
    let e = error_line(&o);
    assert_eq!(e["kind"], "config");
    assert_eq!(e["violations"].as_array().unwrap().len(), 5, "{e}");

    fs::write(&cfg, r#"{"no_such_key": 1}"#).unwrap();
    let o = ase_fd(dir.path(), &["--config", cfg.to_str().unwrap(), "cost"]);
    assert_eq!(error_line(&o)["kind"], "config");
}

#[test]
fn missing_manifest_reports_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = ase_fd(dir.path(), &["ingest", "--manifest", "/nonexistent/manifest.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_line(&o)["kind"], "missing_file");
}

#[test]
fn written_dataset_feeds_the_whole_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--subjects", "3", "--trials", "6", "--seed", "4"]);
    let manifest = d.join("synthetic").join("manifest.json");
    let m = manifest.to_str().unwrap();
    let summary = ok(d, &["ingest", "--manifest", m]);
    assert!(summary.contains("18 trials from 3 subjects"), "{summary}");
    ok(d, &["features", "--manifest", m, "--alpha", "0"]);
    let feats = d.join("features_alpha0_original.csv");
    for clf in ["svm", "knn"] {
        ok(d, &["train-fd", "--features", feats.to_str().unwrap(), "--classifier", clf]);
        assert!(d.join(format!("fd_{clf}.fdml")).exists());
    }
    ok(d, &["eval", "--manifest", m, "--alpha", "6", "--epochs", "1", "--patience", "1"]);
    let report = fs::read_to_string(d.join("eval_alpha6_report.csv")).unwrap();
    assert_eq!(report.lines().filter(|l| l.split(',').nth(5) == Some("mean")).count(), 4);
    // 3 subjects -> 3 folds per setting
    assert_eq!(report.lines().count(), 1 + 4 * 3 + 4);
}
