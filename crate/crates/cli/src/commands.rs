use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ase_fd::ase::{build_config, train, AseModel};
use ase_fd::classify::{ClassifierKind, FdModel};
use ase_fd::cost::{config_layers, count_flops, CostModel, REFERENCE_TABLE};
use ase_fd::eval::{format_rate, sweep, write_report_csv, write_report_json, write_summary_table, EvalOptions, EvalReport};
use ase_fd::features::{frame_features, read_feature_csv, write_feature_csv, FeatureRow};
use ase_fd::ingest::{
    load_manifest, synth_dataset, write_trial_csv, CsvSchema, DatasetManifest, LabelMap, ManifestEntry, ManifestFile,
};
use ase_fd::preprocess::{denormalize, frame_pair, Frame, WindowSpec, FRAME_LEN};
use ase_fd::Error;
use serde::Serialize;

use crate::config::RunConfig;
use crate::{Cli, CliError, Command};

type Outputs = Vec<PathBuf>;

pub fn run(cli: &Cli, cfg: &RunConfig) -> Result<(), CliError> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let outputs = match &cli.command {
        Command::Synth(_) => synth(cfg)?,
        Command::Ingest { alpha, .. } => ingest(cfg, *alpha)?,
        Command::TrainAse { alpha, .. } => train_ase(cfg, *alpha)?,
        Command::Enhance { model, frame } => enhance(cfg, model, frame)?,
        Command::Features { alpha, model, .. } => features(cfg, *alpha, model.as_deref())?,
        Command::TrainFd { features, classifier } => train_fd(cfg, features, classifier)?,
        Command::Eval { alpha, .. } => evaluate(cfg, &format!("eval_alpha{alpha}"))?,
        Command::Sweep { .. } => evaluate(cfg, "sweep")?,
        Command::Cost { reference_mflops, mflops } => cost(cfg, *reference_mflops, mflops)?,
    };
    write_provenance(cli, cfg, &outputs)
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    argv: Vec<String>,
    config: &'a RunConfig,
    outputs: &'a [PathBuf],
}

fn write_provenance(cli: &Cli, cfg: &RunConfig, outputs: &[PathBuf]) -> Result<(), CliError> {
    let record = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        argv: std::env::args().collect(),
        config: cfg,
        outputs,
    };
    write_json(&cfg.output_dir.join("run.json"), &record)?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn load_dataset(cfg: &RunConfig) -> Result<DatasetManifest, CliError> {
    Ok(match &cfg.manifest {
        Some(p) => load_manifest(p)?,
        None => {
            let s = &cfg.synthetic;
            synth_dataset(s.subjects, s.trials_per_subject, cfg.seed, s.rate_hz, s.duration_s)?
        }
    })
}

fn window_of(m: &DatasetManifest) -> Result<WindowSpec, CliError> {
    Ok(WindowSpec::new(m.window_backward_s, m.window_forward_s)?)
}

fn synth(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let m = load_dataset(&RunConfig {
        manifest: None,
        ..cfg.clone()
    })?;
    let dir = cfg.output_dir.join("synthetic");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut entries = Vec::new();
    for (k, t) in m.trials.iter().enumerate() {
        let name = format!("{}_{}_R{k:03}.csv", t.activity_code, t.subject_id);
        write_trial_csv(t, &dir.join(&name))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(name),
            subject_id: t.subject_id.clone(),
            activity_code: t.activity_code.clone(),
        });
    }
    let file = ManifestFile {
        dataset: m.dataset_name,
        rate_hz: cfg.synthetic.rate_hz,
        vertical_axis: Some(m.vertical_axis),
        window_backward_s: Some(m.window_backward_s),
        window_forward_s: Some(m.window_forward_s),
        schema: CsvSchema::default(),
        adc: None,
        label_map: LabelMap::default(),
        exclude_subjects: Vec::new(),
        trials: entries,
    };
    let manifest = write_json(&dir.join("manifest.json"), &file)?;
    println!("wrote {} trials and {}", m.trials.len(), manifest.display());
    Ok(vec![manifest])
}

#[derive(Serialize)]
struct SubjectSummary {
    falls: usize,
    adls: usize,
}

fn ingest(cfg: &RunConfig, alpha: Option<u32>) -> Result<Outputs, CliError> {
    let m = load_dataset(cfg)?;
    let mut subjects: BTreeMap<String, SubjectSummary> = BTreeMap::new();
    for t in &m.trials {
        let e = subjects
            .entry(t.subject_id.clone())
            .or_insert(SubjectSummary { falls: 0, adls: 0 });
        match t.label {
            ase_fd::ingest::Label::Fall => e.falls += 1,
            ase_fd::ingest::Label::Adl => e.adls += 1,
        }
    }
    let summary = serde_json::json!({
        "dataset": m.dataset_name.as_str(),
        "rate_hz": m.rate_hz(),
        "vertical_axis": m.vertical_axis,
        "window_backward_s": m.window_backward_s,
        "window_forward_s": m.window_forward_s,
        "trials": m.trials.len(),
        "subjects": subjects,
    });
    let mut outputs = vec![write_json(&cfg.output_dir.join("ingest_summary.json"), &summary)?];
    println!("{} trials from {} subjects", m.trials.len(), subjects.len());
    if let Some(alpha) = alpha {
        let window = window_of(&m)?;
        let dir = cfg.output_dir.join(format!("frames_alpha{alpha}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (k, t) in m.trials.iter().enumerate() {
            let (lr, hr) = frame_pair(t, &window, alpha)?;
            let stem = format!("{k:04}_{}_{}", t.subject_id, t.activity_code);
            lr.save(&dir.join(format!("{stem}_lr.asef")))?;
            hr.save(&dir.join(format!("{stem}_hr.asef")))?;
        }
        outputs.push(dir);
    }
    Ok(outputs)
}

fn train_ase(cfg: &RunConfig, alpha: u32) -> Result<Outputs, CliError> {
    let m = load_dataset(cfg)?;
    let window = window_of(&m)?;
    let pairs = m
        .trials
        .iter()
        .map(|t| frame_pair(t, &window, alpha))
        .collect::<ase_fd::Result<Vec<_>>>()?;
    let config = build_config(alpha, cfg.l2_weight, cfg.dropout_p)?;
    let trained = train(&pairs, &config, &cfg.train)?;
    let model_path = cfg.output_dir.join(format!("ase_alpha{alpha}.asem"));
    trained.model.save(&model_path)?;
    let report = write_json(&cfg.output_dir.join(format!("ase_alpha{alpha}_report.json")), &trained.report)?;
    println!(
        "alpha {alpha}: {} epochs, best validation MAE {:.5} at epoch {}",
        trained.report.epochs_run, trained.report.best_val_mae, trained.report.best_epoch
    );
    Ok(vec![model_path, report])
}

fn enhance(cfg: &RunConfig, model: &Path, frame: &Path) -> Result<Outputs, CliError> {
    let model = AseModel::load(model)?;
    let input = Frame::load(frame)?;
    let enhanced = model.enhance(&input)?;
    let stem = frame.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
    let path = cfg.output_dir.join(format!("{stem}_enhanced.asef"));
    enhanced.save(&path)?;
    println!("wrote {}", path.display());
    Ok(vec![path])
}

fn features(cfg: &RunConfig, alpha: u32, model: Option<&Path>) -> Result<Outputs, CliError> {
    let m = load_dataset(cfg)?;
    let window = window_of(&m)?;
    let model = model.map(AseModel::load).transpose()?;
    if let Some(model) = &model {
        if model.config().alpha != alpha {
            return Err(Error::InvalidArgument(format!(
                "model was built for alpha {}, features requested at alpha {alpha}",
                model.config().alpha
            ))
            .into());
        }
    }
    let rows = m
        .trials
        .iter()
        .map(|t| {
            let (lr, _) = frame_pair(t, &window, alpha)?;
            let front = match &model {
                Some(model) => model.enhance(&lr)?,
                None => lr.resampled(FRAME_LEN)?,
            };
            Ok(FeatureRow {
                subject_id: t.subject_id.clone(),
                label: t.label,
                features: frame_features(&denormalize(&front)?, m.vertical_axis)?,
            })
        })
        .collect::<ase_fd::Result<Vec<_>>>()?;
    let tag = if model.is_some() { "ase" } else { "original" };
    let path = cfg.output_dir.join(format!("features_alpha{alpha}_{tag}.csv"));
    write_feature_csv(&rows, &path)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(vec![path])
}

fn train_fd(cfg: &RunConfig, features: &Path, classifier: &str) -> Result<Outputs, CliError> {
    let kind: ClassifierKind = classifier.parse()?;
    let rows = read_feature_csv(features)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| r.features.as_slice().to_vec()).collect();
    let y: Vec<_> = rows.iter().map(|r| r.label).collect();
    let model = FdModel::train(kind, &x, &y)?;
    let correct = x.iter().zip(&y).filter(|(r, l)| model.predict(r) == **l).count();
    let path = cfg.output_dir.join(format!("fd_{}.fdml", kind.as_str()));
    model.save(&path)?;
    println!("{}: training accuracy {}/{}", kind.as_str(), correct, rows.len());
    Ok(vec![path])
}

fn evaluate(cfg: &RunConfig, stem: &str) -> Result<Outputs, CliError> {
    let m = load_dataset(cfg)?;
    let opts = EvalOptions {
        train: cfg.train.clone(),
        l2_weight: cfg.l2_weight,
        dropout_p: cfg.dropout_p,
        jobs: cfg.jobs,
        ..EvalOptions::default()
    };
    let reports = sweep(&m, &cfg.alphas, &cfg.classifiers, &cfg.ase.front_ends(), &opts)?;
    let dir = &cfg.output_dir;
    let csv = dir.join(format!("{stem}_report.csv"));
    let table = dir.join(format!("{stem}_table.csv"));
    let json = dir.join(format!("{stem}_report.json"));
    write_report_csv(&reports, &csv)?;
    write_summary_table(&reports, &table)?;
    write_report_json(&reports, &json)?;
    print_summary(&reports);
    Ok(vec![csv, table, json])
}

fn print_summary(reports: &[EvalReport]) {
    for r in reports {
        let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v));
        let a = r.average.as_metrics();
        println!(
            "{:<4} {:<8} {:>7} Hz  acc {:>6}  sen {:>6}  spe {:>6}  pre {:>6}",
            r.classifier.as_str(),
            r.front_end.as_str(),
            format_rate(r.rate_hz),
            pct(a.acc),
            pct(a.sen),
            pct(a.spe),
            pct(a.pre)
        );
    }
}

fn cost(cfg: &RunConfig, reference: bool, extra: &[f64]) -> Result<Outputs, CliError> {
    let model = CostModel::default();
    let path = cfg.output_dir.join("cost.csv");
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record([
        "source",
        "alpha",
        "sisfall_hz",
        "fallalld_hz",
        "mflops",
        "power_ma",
        "battery_h",
        "response_s",
        "reference_battery_h",
        "reference_response_s",
        "battery_rel_err",
        "response_rel_err",
    ])
    .map_err(Error::from)?;
    let battery = |b: Option<f64>| b.map_or_else(|| "UNBOUNDED".to_string(), |b| format!("{b:.3}"));
    let mut row = |source: &str, alpha: String, s: String, f: String, mflops: f64, refs: Option<(f64, f64)>| {
        let e = model.estimate(mflops);
        let (rb, rr, eb, er) = match (refs, e.battery_life_h) {
            (Some((b, r)), Some(bl)) => (
                format!("{b}"),
                format!("{r}"),
                format!("{:.4}", (bl - b).abs() / b),
                format!("{:.4}", (e.response_time_s - r).abs() / r),
            ),
            _ => Default::default(),
        };
        w.write_record([
            source.to_string(),
            alpha,
            s,
            f,
            format!("{mflops:.3}"),
            format!("{:.3}", e.power_ma),
            battery(e.battery_life_h),
            format!("{:.3}", e.response_time_s),
            rb,
            rr,
            eb,
            er,
        ])
    };
    for r in &REFERENCE_TABLE {
        let config = build_config(r.alpha, 0.0, 0.0)?;
        let mflops = count_flops(&config_layers(&config)) as f64 / 1e6;
        row(
            "counted",
            r.alpha.to_string(),
            format_rate(r.sisfall_hz),
            format_rate(r.fallalld_hz),
            mflops,
            None,
        )
        .map_err(Error::from)?;
    }
    if reference {
        for r in &REFERENCE_TABLE {
            row(
                "reference",
                r.alpha.to_string(),
                format_rate(r.sisfall_hz),
                format_rate(r.fallalld_hz),
                r.mflops,
                Some((r.battery_h, r.response_s)),
            )
            .map_err(Error::from)?;
        }
    }
    for &m in extra {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(CliError::Config(vec![format!("mflops: {m} must be non-negative")]));
        }
        row("input", String::new(), String::new(), String::new(), m, None).map_err(Error::from)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    drop(w);
    print!("{}", fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
    Ok(vec![path])
}
