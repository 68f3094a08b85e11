use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ghplom::data::{load_matrix, MatrixFormat};
use serde_json::Value;
use tempfile::TempDir;

fn ghplom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghplom"))
        .args(args)
        .env_remove("PLOM_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, instance: &Value) {
    let validator = jsonschema::validator_for(&schema(schema_name)).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}\n{instance:#}");
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a dataset into `dir` and returns its path.
fn gen(dir: &TempDir, dataset: &str, n: usize, noise: f64, seed: u64, name: &str) -> PathBuf {
    let out = dir.path().join(name);
    let r = ghplom(&[
        "hermite-gen",
        "--dataset",
        dataset,
        "--n",
        &n.to_string(),
        "--noise",
        &noise.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    out
}

fn fit(data: &Path, model: &Path, extra: &[&str]) -> (Output, Option<Value>) {
    let mut args = vec!["fit", "--data", path_str(data), "--out", path_str(model)];
    args.extend_from_slice(extra);
    let r = ghplom(&args);
    let json = serde_json::from_slice(&r.stdout).ok();
    (r, json)
}

#[test]
fn hermite_gen_d7_has_eleven_rows_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let out = gen(&dir, "D7", 64, 0.0, 7, "d7.plom");
    let m = load_matrix(&out, MatrixFormat::PlomBin).unwrap();
    assert_eq!((m.n_features(), m.n_samples()), (11, 64));
    let side: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("d7.plom.json")).unwrap()).unwrap();
    assert_valid("dataset.schema.json", &side);
    assert_eq!(side["labels"].as_array().unwrap().len(), 11);
}

#[test]
fn hermite_gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = gen(&dir, "D3", 50, 0.1, 3, "a.csv");
    let b = gen(&dir, "D3", 50, 0.1, 3, "b.csv");
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn unknown_dataset_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.plom");
    let r = ghplom(&["hermite-gen", "--dataset", "D9", "--n", "10", "--out", path_str(&out)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("D0") && stderr(&r).contains("D7"), "{}", stderr(&r));
}

#[test]
fn missing_data_file_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let (r, _) = fit(&dir.path().join("absent.csv"), &dir.path().join("m.bin"), &[]);
    assert_eq!(code(&r), 2);
}

#[test]
fn bad_arguments_are_usage_errors() {
    let r = ghplom(&["fit", "--bogus"]);
    assert_eq!(code(&r), 2);
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 40, 0.05, 1, "d1.csv");
    let (r, _) = fit(&data, &dir.path().join("m.bin"), &["--delta", "1.5"]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
    let (r, _) = fit(&data, &dir.path().join("m.bin"), &["--select", "best=3"]);
    assert_eq!(code(&r), 2);
    let r = ghplom(&["--threads", "0", "spectrum", "--data", path_str(&data), "--out", "x.csv"]);
    assert_eq!(code(&r), 2);
}

#[test]
fn config_rejects_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 40, 0.05, 1, "d1.csv");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[dmaps]\neps_multiplier = 15.0\nepsilon_typo = 1.0\n").unwrap();
    let (r, _) = fit(&data, &dir.path().join("m.bin"), &["--config", path_str(&cfg)]);
    assert_eq!(code(&r), 2);
    assert!(stderr(&r).contains("epsilon_typo"), "{}", stderr(&r));
}

#[test]
fn config_file_and_flags_apply() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 200, 0.05, 2, "d1.plom");
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[dmaps]\nn_eigen = 6\nselection = \"top_m=3\"\n[gh]\ndelta = 1e-4\n[sampler]\nburn_in = 20\nstride = 5\n",
    )
    .unwrap();
    let (r, json) = fit(&data, &dir.path().join("m.bin"), &["--config", path_str(&cfg), "--select", "top_m=2"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let json = json.unwrap();
    assert_valid("fit_summary.schema.json", &json);
    // the flag wins over the file; n_eigen comes from the file
    assert_eq!(json["selected"].as_array().unwrap().len(), 2);
    assert_eq!(json["residuals"].as_array().unwrap().len(), 6);
    // sidecar labels route the input rows to the lift only
    assert_eq!(json["lifted_only_rows"].as_array().unwrap().len(), 2);
}

#[test]
fn d1_top_two_selection_reports_two_indices() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 300, 0.05, 0, "d1.plom");
    let (r, json) = fit(&data, &dir.path().join("m.bin"), &["--select", "top_m=2"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let json = json.unwrap();
    assert_valid("fit_summary.schema.json", &json);
    assert_eq!(json["latent_dim"], 2);
    assert_eq!(json["selected"].as_array().unwrap().len(), 2);
}

#[test]
fn sample_writes_files_and_valid_report_deterministically() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 120, 0.05, 4, "d1.plom");
    let model = dir.path().join("m.bin");
    let (r, _) = fit(&data, &model, &["--select", "top_m=2", "--burn-in", "30", "--stride", "10"]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));

    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = ghplom(&[
            "sample", "--model", path_str(&model), "--n-mc", "3", "--seed", "5", "--out-dir", path_str(&out),
        ]);
        assert_eq!(code(&r), 0, "{}", stderr(&r));
        let summary: Value = serde_json::from_slice(&r.stdout).unwrap();
        assert_valid("sample_summary.schema.json", &summary);
        out
    };
    let a = run("a");
    let b = run("b");
    for name in ["realization_0000.csv", "realization_0001.csv", "realization_0002.csv", "diagnostics.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("diagnostics.json")).unwrap()).unwrap();
    assert_valid("diagnostics.schema.json", &report);
    assert_eq!(report["n_realizations"], 3);
    let m = ghplom::data::load_matrix(a.join("realization_0000.csv"), MatrixFormat::Csv).unwrap();
    assert_eq!((m.n_features(), m.n_samples()), (5, 120));
}

#[test]
fn sample_rejects_zero_realizations_and_missing_model() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let r = ghplom(&["sample", "--model", "nowhere.bin", "--n-mc", "0", "--out-dir", path_str(&out)]);
    assert_eq!(code(&r), 2);
    let r = ghplom(&["sample", "--model", "nowhere.bin", "--n-mc", "2", "--out-dir", path_str(&out)]);
    assert_eq!(code(&r), 2);
}

#[test]
fn corrupt_model_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m.bin");
    fs::write(&model, b"definitely not a model").unwrap();
    let out = dir.path().join("o");
    let r = ghplom(&["sample", "--model", path_str(&model), "--n-mc", "1", "--out-dir", path_str(&out)]);
    assert_eq!(code(&r), 2, "{}", stderr(&r));
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn spectrum_is_non_increasing() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D2", 150, 0.05, 1, "d2.plom");
    let out = dir.path().join("spectrum.csv");
    let r = ghplom(&["spectrum", "--data", path_str(&data), "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let values: Vec<f64> = read_csv_rows(&out).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(values.len(), 10);
    assert!((values[0] - 1.0).abs() < 1e-10);
    assert!(values.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn two_point_spectrum_matches_closed_form() {
    // two points differing by 1 in each of 3 scaled features: d^2 = 3 and
    // eps = 15 * 3, so a = exp(-1/60)
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("two.csv");
    fs::write(&data, "0,1\n5,2\n-1,4\n").unwrap();
    let out = dir.path().join("spectrum.csv");
    let r = ghplom(&["spectrum", "--data", path_str(&data), "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let values: Vec<f64> = read_csv_rows(&out).iter().map(|r| r[1].parse().unwrap()).collect();
    let a = (-1.0f64 / 60.0).exp();
    assert_eq!(values.len(), 2);
    assert!((values[0] - 1.0).abs() < 1e-12);
    assert!((values[1] - (1.0 - a) / (1.0 + a)).abs() < 1e-12, "{values:?}");
}

#[test]
fn residual_csv_flags_selection() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 200, 0.05, 3, "d1.plom");
    let out = dir.path().join("res.csv");
    let r = ghplom(&[
        "residuals", "--data", path_str(&data), "--out", path_str(&out), "--select", "top_m=2",
    ]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let rows = read_csv_rows(&out);
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[0][1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows.iter().filter(|r| r[2] == "true").count(), 2);
}

#[test]
fn threads_flag_and_env_fallback() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "D1", 60, 0.05, 1, "d1.plom");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let r = ghplom(&["--threads", "1", "spectrum", "--data", path_str(&data), "--out", path_str(&a)]);
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let r = Command::new(env!("CARGO_BIN_EXE_ghplom"))
        .args(["spectrum", "--data", path_str(&data), "--out", path_str(&b)])
        .env("PLOM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    let r = Command::new(env!("CARGO_BIN_EXE_ghplom"))
        .args(["spectrum", "--data", path_str(&data), "--out", "x.csv"])
        .env("PLOM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&r), 2);
}
