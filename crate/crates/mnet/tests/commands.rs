#![allow(clippy::field_reassign_with_default)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use mnet::commands::{cmd_evaluate, cmd_gradcheck, cmd_inspect_arch, cmd_phantom, cmd_train, CHECKPOINT, DICE_CSV, METRICS_CSV};
use mnet::config::{RunConfig, Split, RESOLVED_CONFIG};
use mnet::dataset::{load_cases, Manifest};
use mnet::{checkpoint, ArchChoice, Error};
use mnet_core::data::PhantomSpec;
use mnet_core::graph::{MNet, MNetConfig};

fn small_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.model = MNetConfig { base_channels: 2, channel_growth: 1, ..Default::default() };
    cfg.train.max_epochs = 3;
    cfg.train.iterations_per_epoch = 2;
    cfg.train.batch_size = 1;
    cfg.train.patch_size = [16, 32, 32];
    cfg.phantom = PhantomSpec {
        shape: [16, 32, 32],
        spacing_mm: [4.0, 2.0, 2.0],
        organ_radius_mm: [[18.0, 24.0], [9.0, 12.0], [10.0, 13.0]],
        tumor_radius_mm: [3.0, 5.0],
        seed: 7,
        ..Default::default()
    };
    cfg.dataset.cases = 3;
    cfg.dataset.dir = Some(root.join("data"));
    cfg.output_dir = root.join("data");
    cfg
}

fn with_dataset(root: &Path) -> RunConfig {
    let mut cfg = small_config(root);
    cmd_phantom(&cfg).unwrap();
    cfg.output_dir = root.join("run");
    cfg
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn bin() -> Process {
    Process::new(env!("CARGO_BIN_EXE_mnet"))
}

fn write_config(path: &Path, cfg: &RunConfig) -> PathBuf {
    fs::write(path, serde_json::to_string(cfg).unwrap()).unwrap();
    path.to_path_buf()
}

#[test]
fn phantom_command_is_byte_reproducible_and_lists_every_case() {
    let t = tempfile::tempdir().unwrap();
    let mut cfg = small_config(t.path());
    cfg.dataset.cases = 10;
    cfg.output_dir = t.path().join("a");
    let m = cmd_phantom(&cfg).unwrap();
    let first = dir_bytes(&t.path().join("a"));
    fs::remove_dir_all(t.path().join("a")).unwrap();
    cmd_phantom(&cfg).unwrap();
    assert_eq!(dir_bytes(&t.path().join("a")), first);
    // Elsewhere only the recorded output_dir differs.
    cfg.output_dir = t.path().join("b");
    cmd_phantom(&cfg).unwrap();
    let without_config =
        |v: Vec<(String, Vec<u8>)>| v.into_iter().filter(|(n, _)| n != RESOLVED_CONFIG).collect::<Vec<_>>();
    assert_eq!(without_config(dir_bytes(&t.path().join("b"))), without_config(first));
    cfg.output_dir = t.path().join("a");
    assert_eq!(m.cases.len(), 10);
    let ids: Vec<String> = Manifest::load(&t.path().join("a")).unwrap().cases.into_iter().map(|c| c.id).collect();
    assert_eq!(ids, (0..10).map(|i| format!("case_{i:03}")).collect::<Vec<_>>());
    assert!(t.path().join("a").join(RESOLVED_CONFIG).exists());
    let cases = load_cases(&t.path().join("a")).unwrap();
    assert_ne!(cases[0].case.labels, cases[1].case.labels, "cases use distinct seeds");

    cfg.dataset.cases = 0;
    assert!(matches!(cmd_phantom(&cfg), Err(Error::Config(_))));
}

#[test]
fn zero_learning_rate_checkpoint_equals_initialization() {
    let t = tempfile::tempdir().unwrap();
    let mut cfg = with_dataset(t.path());
    cfg.train.initial_lr = 0.0;
    let report = cmd_train(&cfg).unwrap();
    assert_eq!(report.rows.len(), cfg.train.max_epochs);
    let csv = fs::read_to_string(cfg.output_dir.join(METRICS_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 1 + cfg.train.max_epochs);
    assert_eq!(
        csv.lines().next().unwrap(),
        "epoch,lr,loss_total,loss_main,dice_class0,dice_class1,dice_class2,wall_clock_s"
    );
    let init: MNet<f32> = ArchChoice::Mesh.model(&cfg.model, cfg.train.seed).unwrap();
    let trained: MNet<f32> = checkpoint::load(&cfg.output_dir.join(CHECKPOINT)).unwrap().into_model().unwrap();
    for (a, b) in init.params().iter().zip(trained.params().iter()) {
        assert_eq!(a.value, b.value, "{}", a.name);
    }
    let resolved: RunConfig = RunConfig::load(&cfg.output_dir.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(resolved, cfg);
}

#[test]
fn training_reruns_reproduce_metrics_and_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let mut cfg = with_dataset(t.path());
    cfg.train_options.eval_every = 2;
    let mut outputs = Vec::new();
    for name in ["r1", "r2"] {
        cfg.output_dir = t.path().join(name);
        cmd_train(&cfg).unwrap();
        let csv = fs::read_to_string(cfg.output_dir.join(METRICS_CSV)).unwrap();
        let stripped: Vec<String> = csv.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect();
        outputs.push((stripped, fs::read(cfg.output_dir.join(CHECKPOINT)).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let rows = &outputs[0].0;
    // Dice at epochs 1 and 2 (every second epoch and the last), empty at 0.
    assert!(rows[1].ends_with(",,,"), "{}", rows[1]);
    assert!(!rows[2].ends_with(','), "{}", rows[2]);
    assert!(!rows[3].ends_with(','), "{}", rows[3]);
}

#[test]
fn identity_model_scores_one_and_mean_row_is_the_mean() {
    let t = tempfile::tempdir().unwrap();
    let mut cfg = with_dataset(t.path());
    cfg.evaluate.identity_model = true;
    let r = cmd_evaluate(&cfg).unwrap();
    assert_eq!(r.cases.len(), 3);
    assert!(r.cases.iter().all(|(_, d)| d.iter().all(|&v| v == 1.0)));
    let csv = fs::read_to_string(cfg.output_dir.join(DICE_CSV)).unwrap();
    assert_eq!(csv.lines().last().unwrap(), "mean,1,1,1");

    cfg.evaluate.overlap = 0.0;
    let r0 = cmd_evaluate(&cfg).unwrap();
    assert_eq!(r0, r);
}

#[test]
fn evaluation_of_a_trained_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let mut cfg = with_dataset(t.path());
    cmd_train(&cfg).unwrap();
    cfg.evaluate.split = Split::Test;
    let r = cmd_evaluate(&cfg).unwrap();
    assert_eq!(r.cases.len(), 1, "20% of 3 cases rounds to one test case");
    for c in 0..3 {
        let mean = r.cases.iter().map(|(_, d)| d[c]).sum::<f64>() / r.cases.len() as f64;
        assert_eq!(r.mean[c], mean);
    }
    assert_eq!(cmd_evaluate(&cfg).unwrap(), r, "deterministic");
    cfg.evaluate.split = Split::Train;
    assert_eq!(cmd_evaluate(&cfg).unwrap().cases.len(), 2);

    cfg.model.base_channels = 3;
    assert!(matches!(cmd_evaluate(&cfg), Err(Error::Config(_))), "checkpoint/config mismatch");
}

#[test]
fn inspect_reports_grid_structure() {
    let cfg = RunConfig::default();
    let r = cmd_inspect_arch(&cfg).unwrap();
    assert_eq!((r.nodes.len(), r.subnet_count, r.kind_histogram), (25, 70, [7, 7, 11]));
    assert!(r.nodes.iter().map(|n| n.params).sum::<usize>() <= r.total_params);
    let json: serde_json::Value = serde_json::from_str(&r.render(mnet::config::ReportFormat::Json)).unwrap();
    assert_eq!(json["subnet_count"], 70);
    assert!(r.to_text().contains("serial subnets 70"));

    let mut small = RunConfig::default();
    small.model.grid_n = 3;
    let r = cmd_inspect_arch(&small).unwrap();
    assert_eq!((r.nodes.len(), r.subnet_count), (9, 6));

    small.arch = "subnet:RRDD".into();
    let r = cmd_inspect_arch(&small).unwrap();
    assert_eq!(r.nodes.len(), 5);
}

#[test]
fn gradcheck_reports_every_op_and_catches_a_perturbed_rule() {
    let cfg = RunConfig::default();
    let r = cmd_gradcheck(&cfg).unwrap();
    assert!(r.passed());
    let text = r.to_text();
    for op in ["conv3d", "maxpool3d", "upsample", "instance_norm", "leaky_relu", "softmax", "hybrid_loss"] {
        assert!(text.lines().any(|l| l.starts_with(op) && l.ends_with("PASS")), "{op} missing:\n{text}");
    }
    let mut faulty = cfg.clone();
    faulty.gradcheck.fault = Some("leaky_relu".into());
    let r = cmd_gradcheck(&faulty).unwrap();
    assert_eq!(r.failing(), ["leaky_relu"]);
    faulty.gradcheck.fault = Some("nope".into());
    assert!(matches!(cmd_gradcheck(&faulty), Err(Error::Config(_))));
}

#[test]
fn unknown_config_keys_are_rejected_at_every_level() {
    assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    assert!(RunConfig::from_json(r#"{"train": {"lr": 1}}"#).is_err());
    assert!(RunConfig::from_json(r#"{"phantom": {"radius": 1}}"#).is_err());
    assert!(RunConfig::from_json(r#"{"model": {"grid": 5}}"#).is_err());
    let c = RunConfig::from_json(r#"{"model": {"fmu_mode": "sum"}, "arch": "subnet:DDDDRRRR"}"#).unwrap();
    assert_eq!(c.arch_choice().unwrap(), ArchChoice::Subnet("DDDDRRRR".into()));
}

#[test]
fn binary_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let path = write_config(&t.path().join("c.json"), &cfg);
    let run = |args: &[&str]| bin().args(args).output().unwrap();

    let ok = run(&["phantom", "--config", path.to_str().unwrap(), "--seed", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let written = RunConfig::load(&t.path().join("data").join(RESOLVED_CONFIG)).unwrap();
    assert_eq!((written.phantom.seed, written.train.seed), (3, 3));

    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["inspect-arch", "--arch", "subnet:RRR"]).status.code(), Some(1));
    fs::write(t.path().join("bad.json"), r#"{"unknown": true}"#).unwrap();
    assert_eq!(run(&["train", "--config", t.path().join("bad.json").to_str().unwrap()]).status.code(), Some(1));

    let out = run(&["inspect-arch"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("serial subnets 70"));

    let mut faulty = cfg.clone();
    faulty.gradcheck.fault = Some("conv3d".into());
    let fpath = write_config(&t.path().join("f.json"), &faulty);
    let out = run(&["gradcheck", "--config", fpath.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    let mut diverge = cfg.clone();
    diverge.train.initial_lr = 1e30;
    diverge.train.momentum = 0.0;
    diverge.output_dir = t.path().join("div");
    let dpath = write_config(&t.path().join("d.json"), &diverge);
    let out = run(&["train", "--config", dpath.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite loss"));
    assert!(t.path().join("div").join(METRICS_CSV).exists(), "partial metrics kept");
}

#[test]
fn anisotropy_sweep_requires_one_millimetre_slices() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    assert!(matches!(mnet::commands::cmd_experiment_anisotropy(&cfg), Err(Error::Config(_))));
}
