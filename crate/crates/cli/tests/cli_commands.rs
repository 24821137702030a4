use std::path::Path;
use std::process::Command;

use cssi_core::ncd::{NcdData, NcdModel};
use cssi_core::LabeledDataset;
use cssi_lab::{
    cmd_boundary, cmd_eval, cmd_gen, cmd_oracle, cmd_train, run_pipeline, ExperimentConfig, LabError, RunDirs, ScoreSource,
};

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(text).unwrap()
}

fn small(example: &str, n: usize, model: &str, seeds: &str) -> ExperimentConfig {
    config(&format!(
        r#"{{"name": "t", "dataset": {{"source": "example", "example": "{example}", "n_samples": {n}, "seed": 3}},
            "model": {model}, "seeds": {seeds}}}"#
    ))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cssi-lab"))
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn gen_default_example1_splits_8_1_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"dataset": {"source": "example", "example": "example1"}}"#);
    let report = cmd_gen(&cfg, dir.path()).unwrap();
    assert_eq!(report.rows, [40_000, 5_000, 5_000]);
    let test = LabeledDataset::load(&dir.path().join("data"), "test").unwrap();
    assert_eq!(test.len(), 5_000);
}

#[test]
fn gen_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small("example2", 500, "{}", "[0]");
    cmd_gen(&cfg, a.path()).unwrap();
    cmd_gen(&cfg, b.path()).unwrap();
    for f in ["train.csv", "val.csv", "test.csv", "train.json", "test.json"] {
        assert_eq!(read(&a.path().join("data").join(f)), read(&b.path().join("data").join(f)), "{f}");
    }
}

#[test]
fn bad_tag_exits_with_config_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"dataset": {"source": "synth", "parent_layout": "diagonal", "boundary": "norm-band", "noise": "additive"}}"#,
    )
    .unwrap();
    let out = bin().arg("--config").arg(&path).arg("--out").arg(dir.path()).arg("gen").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parent_layout"));
}

#[test]
fn train_writes_one_checkpoint_per_seed_and_zero_epochs_keeps_init() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("example1", 400, r#"{"hidden": [8], "epochs": 0}"#, "[0, 1, 2]");
    cmd_gen(&cfg, dir.path()).unwrap();
    let reports = cmd_train(&cfg, dir.path()).unwrap();
    assert_eq!(reports.len(), 3);
    let dirs = RunDirs::new(dir.path());
    let train = NcdData::from_dataset(&LabeledDataset::load(&dirs.data(), "train").unwrap(), 0).unwrap();
    for seed in [0, 1, 2] {
        let loaded = NcdModel::load(&dirs.final_model(seed, 0)).unwrap();
        let mut hyper = cfg.model.clone();
        hyper.seed = seed;
        assert_eq!(loaded, NcdModel::for_data(&train, hyper).unwrap());
    }
}

#[test]
fn train_without_data_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("example1", 400, "{}", "[0]");
    let err = cmd_train(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, LabError::Core(cssi_core::Error::Io { .. })), "{err}");
    assert!(err.to_string().contains("train.json"));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn eval_reports_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("example1", 600, r#"{"hidden": [8], "epochs": 2, "batch_size": 100}"#, "[0, 1, 2]");
    let summary = run_pipeline(&cfg, dir.path()).unwrap();
    assert_eq!(summary.seeds.len(), 3);
    let aucs: Vec<f64> = summary.seeds.iter().map(|s| s.auc).collect();
    let mean = aucs.iter().sum::<f64>() / 3.0;
    let std = (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
    assert!((summary.auc.mean - mean).abs() < 1e-15 && (summary.auc.std - std).abs() < 1e-15);
    let json: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("eval/summary.json"))).unwrap();
    assert!(json["auc"]["mean"].is_f64() && json["auc"]["std"].is_f64());
    let c = &json["seeds"][0]["targets"][0]["confusion"][0];
    assert_eq!(c["tp"].as_u64().unwrap() + c["fp"].as_u64().unwrap() + c["fn"].as_u64().unwrap() + c["tn"].as_u64().unwrap(), 2 * 60);
    let svg = String::from_utf8(read(&dir.path().join("eval/roc.svg"))).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
    let csv = String::from_utf8(read(&dir.path().join("eval/roc.csv"))).unwrap();
    assert!(csv.starts_with("seed,target,threshold,fpr,tpr,tp,fp,fn,tn\n"));

    let one = cfg.clone().with_seed(1);
    let s1 = cmd_eval(&one, dir.path()).unwrap();
    assert_eq!(s1.auc.std, 0.0);
    assert_eq!(s1.auc.mean, summary.seeds[1].auc);
}

#[test]
fn oracle_scores_give_perfect_auc() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("example2", 500, "{}", "[0]");
    cfg.eval.scores = ScoreSource::Oracle;
    cmd_gen(&cfg, dir.path()).unwrap();
    let s = cmd_eval(&cfg, dir.path()).unwrap();
    assert_eq!(s.auc.mean, 1.0);
}

#[test]
fn boundary_plots_one_grid_per_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{"dataset": {"source": "example", "example": "toy2d", "n_samples": 500, "seed": 2},
            "model": {"hidden": [8], "epochs": 20, "batch_size": 200},
            "eval": {"checkpoint_every": 5,
                     "boundary": {"x_range": [-4, 4], "y_range": [-4, 4], "resolution": 12, "plane": [0, 3]}}}"#,
    );
    cmd_gen(&cfg, dir.path()).unwrap();
    cmd_train(&cfg, dir.path()).unwrap();
    assert!(cmd_boundary(&cfg, dir.path(), &[]).unwrap().is_empty());
    assert!(!dir.path().join("boundary").exists());

    let reports = cmd_boundary(&cfg, dir.path(), &[5, 10, 15, 20]).unwrap();
    assert_eq!(reports.len(), 4);
    for r in &reports {
        let svg = String::from_utf8(read(&r.path)).unwrap();
        assert_eq!(svg.matches("class=\"cell\"").count(), 144);
        assert!(r.agreement.is_some());
    }
    match cmd_boundary(&cfg, dir.path(), &[5, 7]) {
        Err(e @ LabError::MissingCheckpoint { epoch: 7, .. }) => assert!(e.to_string().contains("epoch 7")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn oracle_check_exit_codes() {
    let ok = bin().args(["oracle-check", "uniqueness", "--instances", "200", "--seed", "5"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["violations"], 0);
    assert_eq!(report["instances"], 200);

    let unknown = bin().args(["oracle-check", "transitivity"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("transitivity"));
    assert!(matches!(cmd_oracle("transitivity", 0, 1), Err(LabError::Core(cssi_core::Error::UnknownCampaign(_)))));

    let inter = cmd_oracle("intersection", 1, 20).unwrap();
    assert!(inter.fixtures.iter().any(|f| f.name.contains("non-convex") && f.passed), "{:?}", inter.fixtures);
}

#[test]
fn pipeline_summary_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = small("example1", 600, r#"{"hidden": [8], "epochs": 2, "batch_size": 100}"#, "[4, 5]");
    run_pipeline(&cfg, a.path()).unwrap();
    run_pipeline(&cfg, b.path()).unwrap();
    for f in ["eval/summary.json", "eval/roc.csv", "eval/roc.svg"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn binary_runs_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"name": "cli", "dataset": {"source": "example", "example": "example1", "n_samples": 300},
            "model": {"hidden": [4], "epochs": 1}, "seeds": [0, 1]}"#,
    )
    .unwrap();
    for cmd in ["gen", "train", "eval"] {
        let out = bin()
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(dir.path())
            .arg(cmd)
            .env("CSSI_LAB_THREADS", "2")
            .output()
            .unwrap();
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = bin().arg("--config").arg(&path).arg("--out").arg(dir.path()).args(["--seed", "1", "eval"]).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("over 1 seeds"));
    let missing = bin().arg("--config").arg(&path).arg("--out").arg(dir.path()).args(["boundary", "--epochs", "3"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
}
