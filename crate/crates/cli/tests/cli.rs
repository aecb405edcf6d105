use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
seed = 4

[synthetic]
locations = 6
years = 3
genotypes = 30
trials = 4

[clustering]
k = 4

[model]
epochs = 2
batch_size = 16

[model.encoder]
hidden1 = 6
hidden2 = 4

[baseline.forest]
n_trees = 5
"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Workspace { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn yatt(&self, args: &[&str]) -> Output {
        let root = self.dir.path();
        Command::new(env!("CARGO_BIN_EXE_yatt"))
            .arg("--config")
            .arg(root.join("run.toml"))
            .arg("--data-dir")
            .arg(root.join("data"))
            .arg("--out-dir")
            .arg(root.join("out"))
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.yatt(args);
        assert!(out.status.success(), "yatt {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap()
    }

    fn prepared(config: &str) -> Self {
        let ws = Workspace::new(config);
        for cmd in ["generate-data", "cluster", "prepare"] {
            ws.ok(&[cmd]);
        }
        ws
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("terminated by signal")
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn column<'a>(csv: &'a str, name: &str) -> Vec<&'a str> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap()).collect()
}

#[test]
fn usage_and_config_errors_exit_1() {
    let ws = Workspace::new(SMALL);
    assert_eq!(code(&ws.yatt(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&ws.yatt(&["frobnicate"])), 1);
    assert_eq!(code(&ws.yatt(&["cluster", "--k", "0"])), 1);

    let bad = Workspace::new("seed = 1\n[model]\nhiden1 = 3\n");
    let out = bad.yatt(&["generate-data"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden1"));

    let pinned = Workspace::new("seed = 1\n[synthetic]\nseed = 3\n");
    assert_eq!(code(&pinned.yatt(&["generate-data"])), 1);
}

#[test]
fn help_exits_0() {
    let ws = Workspace::new(SMALL);
    assert_eq!(code(&ws.yatt(&["--help"])), 0);
}

#[test]
fn missing_or_malformed_data_exits_2() {
    let ws = Workspace::new(SMALL);
    assert_eq!(code(&ws.yatt(&["cluster"])), 2);

    ws.ok(&["generate-data"]);
    fs::write(ws.path("data/correlation.csv"), "genotype_id,G1\nG1,abc\n").unwrap();
    assert_eq!(code(&ws.yatt(&["cluster"])), 2);
}

#[test]
fn diverging_training_exits_3() {
    let ws = Workspace::prepared(SMALL);
    let out = ws.yatt(&["train", "--learning-rate", "1e308"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ws.path("out/model.yatt").exists());
}

#[test]
fn weekly_prepare_yields_thirty_steps() {
    let ws = Workspace::prepared(SMALL);
    let info: serde_json::Value = serde_json::from_str(&ws.read("out/prepared.json")).unwrap();
    assert_eq!(info["seq_len"], 30);
    assert_eq!(info["granularity"], "weekly");
    let n = info["n_train"].as_u64().unwrap() + info["n_validation"].as_u64().unwrap() + info["n_test"].as_u64().unwrap();
    assert_eq!(n, 6 * 3 * 4);
    assert_eq!(ws.read("out/split.csv").lines().count(), 1 + 6 * 3 * 4);

    let echoed = ws.read("out/prepare.config.toml");
    assert!(echoed.contains("granularity = \"weekly\""));
    assert!(echoed.contains("# Derived sub-seeds:"));

    ws.ok(&["prepare", "--granularity", "monthly"]);
    let info: serde_json::Value = serde_json::from_str(&ws.read("out/prepared.json")).unwrap();
    assert_eq!(info["seq_len"], 7);
}

#[test]
fn training_against_a_stale_granularity_is_a_config_error() {
    let ws = Workspace::prepared(SMALL);
    fs::write(ws.path("run.toml"), format!("{SMALL}\n[prepare]\ngranularity = \"biweekly\"\n")).unwrap();
    assert_eq!(code(&ws.yatt(&["train"])), 1);
}

#[test]
fn greedy_records_the_metric_set() {
    let ws = Workspace::prepared(SMALL);
    ws.ok(&["greedy", "--pool", "ADNI,MinSur"]);
    let csv = ws.read("out/greedy.csv");
    assert_eq!(column(&csv, "metric_set"), ["validation", "validation"]);
    assert_eq!(column(&csv, "region"), ["all", "all"]);

    ws.ok(&["greedy", "--pool", "ADNI,MinSur", "--paper-protocol", "--region", "north"]);
    let csv = ws.read("out/greedy.csv");
    assert_eq!(column(&csv, "metric_set"), ["test", "test"]);
    assert_eq!(column(&csv, "region"), ["north", "north"]);
    let mut vars = column(&csv, "variable");
    vars.sort();
    assert_eq!(vars, ["ADNI", "MinSur"]);
}

#[test]
fn full_run_leaves_inputs_untouched() {
    let ws = Workspace::new(SMALL);
    ws.ok(&["generate-data"]);
    let before = snapshot(&ws.path("data"));
    for args in [
        &["cluster"][..],
        &["prepare"],
        &["train", "--kind", "attention"],
        &["evaluate"],
        &["attention-export", "--bands", "2"],
        &["baseline"],
    ] {
        ws.ok(args);
    }
    assert_eq!(snapshot(&ws.path("data")), before);

    for file in [
        "clusters.csv",
        "split.csv",
        "scaler.json",
        "model.yatt",
        "history.csv",
        "metrics.csv",
        "yearwise.csv",
        "heatmap.csv",
        "attention_dist.csv",
        "attention_maps.csv",
        "baselines.csv",
        "train.log",
        "train.config.toml",
    ] {
        assert!(ws.path("out").join(file).is_file(), "missing {file}");
    }
    assert_eq!(column(&ws.read("out/metrics.csv"), "split"), ["train", "validation", "test"]);
    let models = column(&ws.read("out/baselines.csv"), "model").join(" ");
    assert!(models.contains("lasso[lambda=") && models.contains("forest"), "{models}");

    // Attention export needs an attention checkpoint.
    ws.ok(&["train", "--kind", "stacked"]);
    assert_eq!(code(&ws.yatt(&["attention-export"])), 2);
}

#[test]
fn rerunning_a_command_reproduces_its_artifacts() {
    let ws = Workspace::prepared(SMALL);
    ws.ok(&["train"]);
    let first = snapshot(&ws.path("out"));
    ws.ok(&["cluster"]);
    ws.ok(&["prepare"]);
    ws.ok(&["train"]);
    let second = snapshot(&ws.path("out"));
    for name in ["clusters.csv", "split.csv", "scaler.json", "prepared.json", "model.yatt", "history.csv", "train.config.toml"] {
        assert_eq!(first[name], second[name], "{name} changed between runs");
    }
}

#[test]
fn the_seed_changes_the_split() {
    let a = Workspace::prepared(SMALL);
    let b = Workspace::new(SMALL);
    for cmd in ["generate-data", "cluster"] {
        b.ok(&[cmd]);
    }
    b.ok(&["prepare", "--seed", "5"]);
    assert_eq!(a.read("data/performance.csv"), b.read("data/performance.csv"));
    assert_ne!(a.read("out/split.csv"), b.read("out/split.csv"));
}
