//! End-to-end runs of the `tensorloom` binary on small synthetic IDX files.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::Rng;
use tempfile::TempDir;
use tensorloom::{MnistSet, Tensor};

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        for (prefix, n, seed) in [("train", 30, 1), ("test", 12, 2)] {
            let mut r = common::rng(seed);
            let images = Tensor::new(
                [n, 28, 28],
                (0..n * 784)
                    .map(|_| r.gen_range(0u8..=255) as f32 / 255.0)
                    .collect(),
            )
            .unwrap();
            let labels = (0..n).map(|_| r.gen_range(0..10u8)).collect();
            let (img, lab) = MnistSet::new(images, labels).unwrap().to_idx();
            std::fs::write(dir.path().join(format!("{prefix}-images")), img).unwrap();
            std::fs::write(dir.path().join(format!("{prefix}-labels")), lab).unwrap();
        }
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn data_args(&self) -> Vec<String> {
        let p = |n: &str| self.path(n).display().to_string();
        vec![
            "--train-images".into(),
            p("train-images"),
            "--train-labels".into(),
            p("train-labels"),
            "--test-images".into(),
            p("test-images"),
            "--test-labels".into(),
            p("test-labels"),
        ]
    }

    fn eval_args(&self, checkpoint: &Path) -> Vec<String> {
        vec![
            "eval".into(),
            "--checkpoint".into(),
            checkpoint.display().to_string(),
            "--test-images".into(),
            self.path("test-images").display().to_string(),
            "--test-labels".into(),
            self.path("test-labels").display().to_string(),
        ]
    }
}

fn run(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorloom"))
        .args(args)
        .env_remove("TENSORLOOM_MT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn accuracy_line(s: &str) -> &str {
    s.lines()
        .find(|l| l.starts_with("accuracy "))
        .expect("accuracy line")
}

#[test]
fn train_then_eval_reports_same_accuracy() {
    let fx = Fixture::new();
    let ckpt = fx.path("model.tlm");
    let mut args = vec!["train".to_string()];
    args.extend(fx.data_args());
    args.extend(["--epochs", "2", "--batch", "7", "--mt", "2", "--checkpoint"].map(String::from));
    args.push(ckpt.display().to_string());
    let out = run(&args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("epoch ")).count(), 2);
    assert!(text.lines().any(|l| l.starts_with("seconds ")));
    assert!(ckpt.exists());

    let ev = run(&fx.eval_args(&ckpt));
    assert_eq!(
        ev.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ev.stderr)
    );
    assert_eq!(accuracy_line(&text), accuracy_line(&stdout(&ev)));
}

#[test]
fn corrupted_checkpoint_is_a_format_error() {
    let fx = Fixture::new();
    let ckpt = fx.path("model.tlm");
    tensorloom::Params::init(3).save(&ckpt).unwrap();
    let mut bytes = std::fs::read(&ckpt).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&ckpt, bytes).unwrap();
    let out = run(&fx.eval_args(&ckpt));
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
    assert!(!out.stderr.is_empty());
}

#[test]
fn wrong_magic_in_data_is_a_format_error() {
    let fx = Fixture::new();
    std::fs::copy(fx.path("train-labels"), fx.path("train-images")).unwrap();
    let mut args = vec!["train".to_string()];
    args.extend(fx.data_args());
    args.extend(["--epochs", "1"].map(String::from));
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}

#[test]
fn bench_prints_csv_rows() {
    let fx = Fixture::new();
    let mut args = vec!["bench".to_string()];
    args.extend(fx.data_args());
    args.extend(["--epochs", "1", "--batch", "10", "--bench-workers", "1,2"].map(String::from));
    let out = run(&args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "workers,seconds,speedup_vs_1");
    assert_eq!(lines.len(), 3);
    for (line, w) in lines[1..].iter().zip(["1", "2"]) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[0], w);
        assert!(cols[1].parse::<f64>().unwrap() > 0.0);
        assert!(cols[2].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn usage_errors_exit_2() {
    let fx = Fixture::new();
    for bad in [
        vec!["train"],
        vec!["frobnicate"],
        vec!["train", "--rate", "-1"],
    ] {
        let mut args: Vec<String> = bad.iter().map(|s| s.to_string()).collect();
        if bad.len() > 1 && bad[0] == "train" {
            args.extend(fx.data_args());
        }
        assert_eq!(run(&args).status.code(), Some(2), "{bad:?}");
    }
    let mut args = vec!["train".to_string()];
    args.extend(fx.data_args());
    args.extend(["--batch", "0"].map(String::from));
    assert_eq!(run(&args).status.code(), Some(2));
}
