use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cada::model::{init_params, save_model, Head, ModelConfig, ModelFile};

const TINY: &str = r#"
[data]
num_classes = 2

[synthetic]
num_classes = 2
feature_dim = 3
class_means = [[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
class_scales = [0.4, 0.4]
target_offset = [0.0, 0.0, 2.0]
rotation_degrees = 30.0
variance_inflation = 1.2
examples_per_class = 30
seed = 5

[model]
hidden_dim = 6

[train]
max_epochs = 15
patience = 5
fixed_epochs = 10
finetune_epochs = 10

[experiment]
methods = ["all-source", "fine-tune", "cada"]
n_values = [2]
trials = 2
folds = 2
master_seed = 3

[run]
method = "cada"
n_per_class = 3
seed = 1
"#;

fn cada(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cada"))
        .args(args)
        .env_remove("CADA_OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_exits_zero_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [vec!["--help"], vec!["benchmark", "--help"], vec!["evaluate", "--help"]] {
        let out = Command::new(env!("CARGO_BIN_EXE_cada"))
            .args(&sub)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn synth_writes_counts_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let cfg_before = fs::read(&cfg).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = cada(&["synth", "--config", s(&cfg), "--out", s(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["source.csv", "target.csv", "manifest.toml"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rows = fs::read_to_string(a.join("source.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 60);
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 5"), "{manifest}");
    assert_eq!(fs::read(&cfg).unwrap(), cfg_before);
}

#[test]
fn frozen_spec_synth_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = cada(&["synth", "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let spec = cada::config::RunConfig::default_benchmark().synthetic.unwrap();
    for f in ["source.csv", "target.csv"] {
        let rows = fs::read_to_string(dir.path().join(f)).unwrap().lines().count() - 1;
        assert_eq!(rows, spec.examples_per_class * spec.num_classes);
    }
}

#[test]
fn zero_inflation_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &TINY.replace("variance_inflation = 1.2", "variance_inflation = 0.0"));
    let o = cada(&["synth", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("synthetic.variance_inflation"), "{}", stderr(&o));
}

#[test]
fn bad_count_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &TINY.replace("trials = 2", "trials = 0"));
    let o = cada(&["benchmark", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("experiment.trials"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_path_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "paths.toml",
        "[data]\nsource = \"nowhere/src.csv\"\ntarget = \"nowhere/tgt.csv\"\n",
    );
    let o = cada(&["benchmark", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere/src.csv"), "{}", stderr(&o));
}

#[test]
fn benchmark_with_single_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY.replace(
        r#"methods = ["all-source", "fine-tune", "cada"]"#,
        r#"methods = ["all-source"]"#,
    );
    let cfg = write_config(dir.path(), "one.toml", &text);
    let out = dir.path().join("o");
    let o = cada(&["benchmark", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let baselines: Vec<&str> = summary.lines().filter(|l| l.contains('±')).collect();
    assert_eq!(baselines.len(), 1, "{summary}");
    assert!(baselines[0].starts_with("all-source: "));
    assert!(!summary.contains("| Examples"));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);
}

#[test]
fn benchmark_writes_all_outputs_and_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_cada"))
        .args(["benchmark", "--config", s(&cfg), "--seed", "9"])
        .env("CADA_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("| CADA |"), "{summary}");
    assert_eq!(String::from_utf8_lossy(&o.stdout), summary);
    let resolved = cada::config::RunConfig::from_toml_str(&fs::read_to_string(out.join("resolved_config.toml")).unwrap()).unwrap();
    assert_eq!(resolved.experiment.master_seed, 9);
    assert_eq!(resolved.train.batch_size, 64);
    let histories = fs::read_dir(out.join("histories")).unwrap().count();
    // all-source: 1 file, fine-tune: 2, CADA: 1; per fold and trial.
    assert_eq!(histories, 4 * 2 * 2);
    let one = fs::read_to_string(out.join("histories").join("cada_n2_f0_t0_cada.csv")).unwrap();
    assert!(one.starts_with("epoch,ld_fit,ld_holdout,la_fit\n0,"));
}

#[test]
fn train_then_evaluate_beats_untrained() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.toml", TINY);
    let data = dir.path().join("data");
    assert!(cada(&["synth", "--config", s(&cfg), "--out", s(&data)]).status.success());
    let out = dir.path().join("model");
    let o = cada(&["train", "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("history.csv").is_file());

    let ua_of = |model: &Path| -> f64 {
        let o = cada(&["evaluate", "--model", s(model), "--data", s(&data.join("target.csv"))]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = String::from_utf8_lossy(&o.stdout).into_owned();
        text.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    let trained = ua_of(&out.join("model.txt"));

    let untrained_path = dir.path().join("untrained.txt");
    let params = init_params(ModelConfig::new(3, 6, 2, Head::DomainClass).unwrap(), 0).unwrap();
    let trained_file = cada::model::load_model(&out.join("model.txt")).unwrap();
    save_model(
        &untrained_path,
        &ModelFile {
            params,
            normalization: trained_file.normalization,
        },
    )
    .unwrap();
    let untrained = ua_of(&untrained_path);
    assert!(trained >= untrained, "trained {trained} < untrained {untrained}");
}

#[test]
fn evaluate_rejects_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let params = init_params(ModelConfig::new(5, 3, 2, Head::Class).unwrap(), 0).unwrap();
    save_model(&model, &ModelFile { params, normalization: None }).unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "utterance_id,speaker_id,label,f1,f2\nu0,s0,0,0.1,0.2\nu1,s0,1,0.3,0.4\n").unwrap();
    let o = cada(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("dimension") || stderr(&o).contains("feature"), "{}", stderr(&o));
}

#[test]
fn evaluate_rejects_class_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.txt");
    let params = init_params(ModelConfig::new(2, 3, 2, Head::Class).unwrap(), 0).unwrap();
    save_model(&model, &ModelFile { params, normalization: None }).unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "utterance_id,speaker_id,label,f1,f2\nu0,s0,0,0.1,0.2\nu1,s0,2,0.3,0.4\n").unwrap();
    assert!(!cada(&["evaluate", "--model", s(&model), "--data", s(&data)]).status.success());
    let cfg = write_config(dir.path(), "k3.toml", "[data]\nnum_classes = 3\n");
    let ok_data = dir.path().join("ok.csv");
    fs::write(&ok_data, "utterance_id,speaker_id,label,f1,f2\nu0,s0,0,0.1,0.2\nu1,s0,1,0.3,0.4\n").unwrap();
    let o = cada(&["evaluate", "--model", s(&model), "--data", s(&ok_data), "--config", s(&cfg)]);
    assert!(!o.status.success());
}
