use std::path::Path;
use std::process::Command;

use clap::Parser;
use flowda::cli::{run, Cli, DataConfig};
use flowda::flowcore::{read_flow_file, write_flow_file, FlowField};
use flowda::synthdata::{read_dataset, SceneSpec};
use flowda::trainer::{load_checkpoint, read_log, LogRecord, METRICS_FILE};

fn flowda(args: &[&str]) -> flowda::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("flowda").chain(args.iter().copied())).expect("arguments parse");
    run(&cli)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_dataset(root: &Path) -> std::path::PathBuf {
    let small = |spec: SceneSpec| spec.resized(24, 24);
    let cfg = DataConfig {
        n_pairs: 8,
        seed: 4,
        source: small(SceneSpec::default_source()),
        target: small(SceneSpec::default_target()),
    };
    let spec = root.join("data.toml");
    std::fs::write(&spec, toml::to_string(&cfg).unwrap()).unwrap();
    let dir = root.join("data");
    flowda(&["-q", "gen-data", "--spec-file", s(&spec), "--out-dir", s(&dir)]).unwrap();
    dir
}

#[test]
fn gen_data_train_resume_eval_viz() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = small_dataset(root);
    let (pairs, source, _) = read_dataset(&data).unwrap();
    assert_eq!(
        (pairs.source.len(), pairs.target_train.len(), pairs.target_eval.len()),
        (8, 8, 2)
    );
    assert_eq!(source.height, 24);

    let run_dir = root.join("run");
    let train = |extra: &[&str]| {
        let mut args = vec![
            "-q",
            "train",
            "--data-dir",
            s(&data),
            "--out-dir",
            s(&run_dir),
            "--steps",
            "6",
        ];
        args.extend_from_slice(&["--set", "eval_every=3", "--set", "acw.total_steps=6"]);
        args.extend_from_slice(extra);
        flowda(&args)
    };
    train(&["--stop-at", "3"]).unwrap();
    let last = run_dir.join("last.ckpt");
    assert_eq!(load_checkpoint(&last).unwrap().0.step, 3);
    train(&["--resume", s(&last)]).unwrap();
    let (state, cfg) = load_checkpoint(&last).unwrap();
    assert_eq!((state.step, cfg.total_steps), (6, 6));
    let steps = read_log(&run_dir.join(METRICS_FILE))
        .unwrap()
        .iter()
        .filter(|r| matches!(r, LogRecord::Step(_)))
        .count();
    assert_eq!(steps, 6);
    assert!(run_dir.join("config.toml").exists());

    let json = root.join("eval.json");
    flowda(&[
        "eval",
        "--checkpoint",
        s(&last),
        "--data-dir",
        s(&data),
        "--weights",
        "teacher",
        "--out",
        s(&json),
    ])
    .unwrap();
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(metrics["epe"].as_f64().unwrap().is_finite());
    assert_eq!(metrics["per_pair"].as_array().unwrap().len(), 2);

    let png = root.join("flow.png");
    let id = pairs.target_eval[0].id.clone();
    flowda(&[
        "viz",
        "--checkpoint",
        s(&last),
        "--data-dir",
        s(&data),
        "--pair",
        &id,
        "--out",
        s(&png),
    ])
    .unwrap();
    assert!(png.exists());
}

#[test]
fn eval_scores_a_directory_of_flo_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path());
    let (pairs, _, _) = read_dataset(&data).unwrap();
    let preds = tmp.path().join("preds");
    std::fs::create_dir_all(&preds).unwrap();
    for p in &pairs.source {
        write_flow_file(preds.join(format!("{}.flo", p.id)), &p.gt_flow).unwrap();
    }
    let json = tmp.path().join("m.json");
    flowda(&[
        "eval",
        "--predictions",
        s(&preds),
        "--data-dir",
        s(&data),
        "--split",
        "source",
        "--out",
        s(&json),
    ])
    .unwrap();
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(metrics["epe"].as_f64(), Some(0.0));

    // A missing prediction is an error, not a silent skip.
    std::fs::remove_file(preds.join(format!("{}.flo", pairs.source[0].id))).unwrap();
    assert!(flowda(&[
        "eval",
        "--predictions",
        s(&preds),
        "--data-dir",
        s(&data),
        "--split",
        "source"
    ])
    .is_err());
}

#[test]
fn viz_renders_a_flo_file() {
    let tmp = tempfile::tempdir().unwrap();
    let flo = tmp.path().join("f.flo");
    write_flow_file(
        &flo,
        &FlowField::from_fn(10, 12, |x, y| (x as f64 - 6.0, y as f64 - 5.0)),
    )
    .unwrap();
    let png = tmp.path().join("f.png");
    flowda(&["viz", "--flow", s(&flo), "--max-magnitude", "8", "--out", s(&png)]).unwrap();
    let img = image::open(&png).unwrap();
    assert_eq!((img.width(), img.height()), (12, 10));
    assert_eq!(read_flow_file(&flo).unwrap().size(), (10, 12));
}

#[test]
fn ablate_runs_selected_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path());
    let out = tmp.path().join("abl");
    flowda(&[
        "-q",
        "ablate",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&out),
        "--rows",
        "full,no_all",
        "--jobs",
        "2",
        "--set",
        "total_steps=3",
        "--set",
        "acw.total_steps=3",
    ])
    .unwrap();
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.contains("FlowDA") && csv.contains("w/o all"));
    assert!(out.join("full").join(METRICS_FILE).exists());
    assert!(!out.join("no_crop").exists());
}

#[test]
fn bad_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_dataset(tmp.path());
    let out = tmp.path().join("x");
    let bad_key = flowda(&[
        "train",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&out),
        "--set",
        "no.such.key=1",
    ]);
    assert!(bad_key.unwrap_err().to_string().contains("no.such.key"));
    let bad_row = flowda(&[
        "ablate",
        "--data-dir",
        s(&data),
        "--out-dir",
        s(&out),
        "--rows",
        "full,bogus",
    ]);
    assert!(bad_row.unwrap_err().to_string().contains("bogus"));
    assert!(flowda(&[
        "train",
        "--data-dir",
        s(&tmp.path().join("missing")),
        "--out-dir",
        s(&out)
    ])
    .is_err());
}

#[test]
fn binary_exits_nonzero_with_a_message() {
    let out = Command::new(env!("CARGO_BIN_EXE_flowda"))
        .args(["eval", "--predictions", "/nonexistent", "--data-dir", "/nonexistent"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let help = Command::new(env!("CARGO_BIN_EXE_flowda"))
        .arg("--help")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["gen-data", "train", "eval", "viz", "ablate"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}
