use std::fs;

use ase_fd::ase::{build_config, AseModel};
use ase_fd::classify::{ClassifierKind, FdModel};
use ase_fd::features::{frame_features, read_feature_csv, write_feature_csv, FeatureRow};
use ase_fd::ingest::{load_manifest, synth_dataset, write_trial_csv, DatasetKind};
use ase_fd::preprocess::{denormalize, frame_pair, Frame, WindowSpec};
use ase_fd::Error;

#[test]
fn disk_roundtrip_through_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let synth = synth_dataset(3, 4, 77, 200.0, 5.0).unwrap();

    let mut entries = Vec::new();
    for (i, t) in synth.trials.iter().enumerate() {
        let name = format!("{}_{}_R{i:02}.csv", t.activity_code, t.subject_id);
        write_trial_csv(t, &dir.path().join(&name)).unwrap();
        entries.push(serde_json::json!({
            "path": name,
            "subject_id": t.subject_id,
            "activity_code": t.activity_code,
        }));
    }
    let manifest_path = dir.path().join("manifest.json");
    let manifest_json = serde_json::json!({
        "dataset": "synthetic",
        "rate_hz": 200.0,
        "exclude_subjects": ["S03"],
        "trials": entries,
    });
    fs::write(&manifest_path, manifest_json.to_string()).unwrap();

    let loaded = load_manifest(&manifest_path).unwrap();
    assert_eq!(loaded.dataset_name, DatasetKind::Synthetic);
    assert_eq!(loaded.subjects(), ["S01", "S02"]);
    assert_eq!(loaded.trials.len(), 8);
    for (a, b) in loaded.trials.iter().zip(&synth.trials) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.samples.len(), b.samples.len());
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x.ax - y.ax).abs() < 1e-12 && (x.ay - y.ay).abs() < 1e-12 && (x.az - y.az).abs() < 1e-12);
        }
    }

    let spec = WindowSpec::new(loaded.window_backward_s, loaded.window_forward_s).unwrap();
    let (lr, hr) = frame_pair(&loaded.trials[0], &spec, 5).unwrap();
    let lr_path = dir.path().join("lr.asef");
    lr.save(&lr_path).unwrap();
    assert_eq!(Frame::load(&lr_path).unwrap(), lr);
    assert_eq!(hr.per_axis_len(), 256);

    let model = AseModel::new(build_config(5, 0.0, 0.0).unwrap(), 1).unwrap();
    let ckpt = dir.path().join("ase.asem");
    model.save(&ckpt).unwrap();
    let reloaded = AseModel::load(&ckpt).unwrap();
    let enhanced = reloaded.enhance(&lr).unwrap();
    assert_eq!(enhanced, model.enhance(&lr).unwrap());
    assert!(matches!(reloaded.enhance(&enhanced), Err(Error::GeometryMismatch { .. })));

    let rows: Vec<FeatureRow> = loaded
        .trials
        .iter()
        .map(|t| {
            let (_, hr) = frame_pair(t, &spec, 0).unwrap();
            FeatureRow {
                subject_id: t.subject_id.clone(),
                label: t.label,
                features: frame_features(&denormalize(&hr).unwrap(), loaded.vertical_axis).unwrap(),
            }
        })
        .collect();
    let csv_path = dir.path().join("features.csv");
    write_feature_csv(&rows, &csv_path).unwrap();
    let back = read_feature_csv(&csv_path).unwrap();
    assert_eq!(back, rows);

    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.as_slice().to_vec()).collect();
    let y: Vec<_> = rows.iter().map(|r| r.label).collect();
    for kind in [ClassifierKind::Svm, ClassifierKind::Knn] {
        let fd = FdModel::train(kind, &x, &y).unwrap();
        let p = dir.path().join(format!("{}.fdml", kind.as_str()));
        fd.save(&p).unwrap();
        let again = FdModel::load(&p).unwrap();
        assert_eq!(again, fd);
        for row in &x {
            assert_eq!(again.predict(row), fd.predict(row));
        }
    }
}

#[test]
fn missing_and_malformed_inputs_are_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = load_manifest(&dir.path().join("nope.json")).unwrap_err();
    assert_eq!(missing.kind(), "missing_file");
    let p = dir.path().join("bad.json");
    fs::write(&p, "{ not json").unwrap();
    assert_eq!(load_manifest(&p).unwrap_err().kind(), "json");
    let f = dir.path().join("frame.asef");
    fs::write(&f, b"ASEF\x01").unwrap();
    assert_eq!(Frame::load(&f).unwrap_err().kind(), "format");
}
