use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde_json::{json, Value};
use ufce_core::model::BlackBox;
use ufce_service::cli::run;
use ufce_service::registry::{load_with_schema, ModelFile};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

struct Output {
    code: ExitCode,
    stdout: String,
    stderr: String,
}

fn ufce(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("ufce").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let help = ufce(&["--help"]);
    assert_eq!(help.code, ExitCode::SUCCESS);
    assert!(help.stdout.contains("explain"));

    let bad = ufce(&["frobnicate"]);
    assert_eq!(bad.code, ExitCode::from(1));
    assert!(!bad.stderr.is_empty());

    let missing = ufce(&["train"]);
    assert_eq!(missing.code, ExitCode::from(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let out = ufce(&["mi-pairs", "--data", "/nonexistent/x.csv"]);
    assert_eq!(out.code, ExitCode::from(2));
    assert!(out.stderr.starts_with("error: "));

    let rq1 = ufce(&["bench", "rq1", "--out", "/tmp/never", "--data-dir", path(&data_dir())]);
    assert_eq!(rq1.code, ExitCode::from(2));
}

#[test]
fn train_then_explain() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let csv = data_dir().join("graduate.csv");
    let out = ufce(&["train", "--data", path(&csv), "--out", path(&model)]);
    assert_eq!(out.code, ExitCode::SUCCESS, "{}", out.stderr);
    assert!(out.stdout.contains("accuracy"));

    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let ds = load_with_schema(&csv, None).unwrap();
    let lr = file.clone().into_model(&ds).unwrap();
    assert_eq!(ModelFile::from_model(&lr, &ds), file);

    let row = ds.rows.iter().find(|r| lr.predict(r).unwrap() == 0).unwrap();
    let instance: serde_json::Map<String, Value> =
        ds.schema.features.iter().zip(row.iter()).map(|(f, &v)| (f.name.clone(), json!(v))).collect();
    let request = dir.path().join("request.json");
    std::fs::write(&request, json!({ "dataset": "graduate", "instance": instance }).to_string()).unwrap();
    let response = dir.path().join("response.json");
    let data = data_dir();
    let args = ["explain", "--model", path(&model), "--request", path(&request), "--data-dir", path(&data)];
    let out = ufce(&[&args[..], &["--out", path(&response)]].concat());
    assert_eq!(out.code, ExitCode::SUCCESS, "{}", out.stderr);
    let body: Value = serde_json::from_str(&std::fs::read_to_string(&response).unwrap()).unwrap();
    assert!(body["candidates"].is_array());

    let again = ufce(&args);
    assert_eq!(again.code, ExitCode::SUCCESS);
    assert_eq!(again.stdout, std::fs::read_to_string(&response).unwrap());
}

#[test]
fn model_for_another_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let out = ufce(&["train", "--data", path(&data_dir().join("bupa.csv")), "--out", path(&model)]);
    assert_eq!(out.code, ExitCode::SUCCESS, "{}", out.stderr);
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    let wine = load_with_schema(&data_dir().join("wine.csv"), None).unwrap();
    let err = file.into_model(&wine).unwrap_err();
    assert!(err.to_string().contains("schema"), "{err}");
}

#[test]
fn mi_pairs_prints_named_scores() {
    let out = ufce(&["mi-pairs", "--data", path(&data_dir().join("bupa.csv"))]);
    assert_eq!(out.code, ExitCode::SUCCESS, "{}", out.stderr);
    let pairs: Vec<Value> = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(pairs.len(), 15);
    assert!(pairs[0]["i"].is_string());
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = data_dir();
    let args = ["bench", "rq1", "--dataset", "bupa", "--pool-size", "5", "--out", path(dir.path()), "--data-dir", path(&data)];
    let out = ufce(&args);
    assert_eq!(out.code, ExitCode::SUCCESS, "{}", out.stderr);
    for name in ["report.json", "report.csv", "report.md", "config.json", "timing.json"] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    assert!(out.stdout.contains("UFCE3"));
}
