use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn signcraft(args: &[&str]) -> Output {
    signcraft_env(args, &[])
}

fn signcraft_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_signcraft"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for (name, domain, per_class) in [("a", "a", "6"), ("b", "b", "5")] {
            let out = signcraft(&[
                "synth",
                "--out",
                p(&dir.path().join(name)),
                "--domain",
                domain,
                "--per-class",
                per_class,
                "--seed",
                "3",
            ]);
            assert!(out.status.success(), "{}", stderr(&out));
        }
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, data: &str, tag: &str, env: &[(&str, &str)]) -> Output {
        signcraft_env(
            &[
                "train",
                "--data",
                p(&self.path(data)),
                "--epochs",
                "2",
                "--batch-size",
                "8",
                "--seed",
                "5",
                "--out",
                p(&self.path(&format!("{tag}.ckpt"))),
                "--metrics",
                p(&self.path(&format!("{tag}.csv"))),
            ],
            env,
        )
    }

    fn read(&self, name: &str) -> Vec<u8> {
        fs::read(self.path(name)).unwrap()
    }
}

#[test]
fn train_is_byte_reproducible_and_thread_independent() {
    let f = Fixture::new();
    for (tag, threads) in [("r1", "1"), ("r2", "1"), ("r3", "3"), ("r4", "0")] {
        let out = f.train("a", tag, &[("SIGNCRAFT_THREADS", threads)]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("seed: 5"));
    }
    for tag in ["r2", "r3", "r4"] {
        assert_eq!(f.read("r1.ckpt"), f.read(&format!("{tag}.ckpt")), "{tag}");
        assert_eq!(f.read("r1.csv"), f.read(&format!("{tag}.csv")), "{tag}");
    }
    let metrics = String::from_utf8(f.read("r1.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
}

#[test]
fn finetune_reproducible_and_reports_frozen_counts() {
    let f = Fixture::new();
    assert!(f.train("a", "base", &[]).status.success());
    let run = |tag: &str| {
        signcraft(&[
            "finetune",
            "--base",
            p(&f.path("base.ckpt")),
            "--data",
            p(&f.path("b")),
            "--freeze",
            "conv",
            "--epochs",
            "2",
            "--seed",
            "9",
            "--out",
            p(&f.path(&format!("{tag}.ckpt"))),
            "--metrics",
            p(&f.path(&format!("{tag}.csv"))),
        ])
    };
    let first = run("ft1");
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(run("ft2").status.success());
    assert_eq!(f.read("ft1.ckpt"), f.read("ft2.ckpt"));
    assert_eq!(f.read("ft1.csv"), f.read("ft2.csv"));
    let text = stdout(&first);
    // canonical net for 4 classes: 167172 total, conv layers hold 896 + 18496
    assert!(text.contains("total params: 167172"), "{text}");
    assert!(text.contains("trainable params: 147780"), "{text}");
    assert!(text.contains("non-trainable params: 19392"), "{text}");
}

#[test]
fn evaluate_writes_reports_and_checks_classes() {
    let f = Fixture::new();
    assert!(f.train("b", "m", &[]).status.success());
    let prefix = f.path("rep");
    let out = signcraft(&[
        "evaluate",
        "--model",
        p(&f.path("m.ckpt")),
        "--data",
        p(&f.path("b")),
        "--report",
        p(&prefix),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("accuracy: "));
    let preds = fs::read_to_string(format!("{}_predictions.csv", p(&prefix))).unwrap();
    assert_eq!(preds.lines().count(), 21);
    assert_eq!(
        preds.lines().next().unwrap(),
        "sample,true,predicted,confidence,correct"
    );
    let confusion = fs::read_to_string(format!("{}_confusion.csv", p(&prefix))).unwrap();
    assert_eq!(confusion.lines().count(), 5);
    let total: usize = confusion
        .lines()
        .skip(1)
        .flat_map(|l| {
            l.split(',')
                .skip(1)
                .map(|v| v.parse::<usize>().unwrap())
                .collect::<Vec<_>>()
        })
        .sum();
    assert_eq!(total, 20);

    let mismatch = signcraft(&[
        "evaluate",
        "--model",
        p(&f.path("m.ckpt")),
        "--data",
        p(&f.path("a")),
    ]);
    assert_eq!(mismatch.status.code(), Some(2));
    assert!(
        stderr(&mismatch).contains("only in checkpoint"),
        "{}",
        stderr(&mismatch)
    );
}

#[test]
fn predict_clamps_top_k() {
    let f = Fixture::new();
    assert!(f.train("b", "m", &[]).status.success());
    let image = f.path("b").join("02_square-green").join("0001.ppm");
    let out = signcraft(&[
        "predict",
        "--model",
        p(&f.path("m.ckpt")),
        "--image",
        p(&image),
        "--top-k",
        "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 4);
    let probs: Vec<f64> = lines
        .iter()
        .map(|l| l.split('\t').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-5);

    let default = signcraft(&[
        "predict",
        "--model",
        p(&f.path("m.ckpt")),
        "--image",
        p(&image),
    ]);
    assert_eq!(stdout(&default).lines().count(), 3);
}

#[test]
fn user_errors_exit_with_two() {
    let f = Fixture::new();
    let missing = signcraft(&["train", "--data", "/no/such/signs"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).contains("/no/such/signs"));

    fs::write(f.path("junk.ckpt"), b"not a checkpoint at all").unwrap();
    let bad = signcraft(&["summary", "--model", p(&f.path("junk.ckpt"))]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(
        stderr(&bad).contains("junk.ckpt") || stderr(&bad).contains("magic"),
        "{}",
        stderr(&bad)
    );

    let flag = signcraft(&["train", "--data", p(&f.path("a")), "--epochs", "zero"]);
    assert_eq!(flag.status.code(), Some(2));

    let zero = signcraft(&["train", "--data", p(&f.path("a")), "--epochs", "0"]);
    assert_eq!(zero.status.code(), Some(2));

    let lr = signcraft(&["train", "--data", p(&f.path("a")), "--lr=-1"]);
    assert_eq!(lr.status.code(), Some(2));
}

#[test]
fn help_and_summary() {
    let help = signcraft(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("finetune"));

    let out = signcraft(&["summary", "--arch-for-classes", "43"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("total params: 169707"), "{text}");
    for name in ["max_pool2x2_1", "dropout_1", "flatten_1"] {
        let row = text.lines().find(|l| l.starts_with(name)).unwrap();
        assert!(row.trim_end().ends_with(" 0"), "{row}");
    }
}
