use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slotjudge"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// A world small enough for a seconds-long training run.
const SMALL_WORLD: &str = r#"
categories = ["circle", "square"]
colors = ["red", "blue"]
sizes = ["small", "large"]
patterns = ["plain"]
max_objects = 3
properties_per_sample = 4
"#;

const SMALL_MODEL: &str = "d_model = 32\nn_layers = 1\nn_heads = 2\nd_ff = 64\ncontext_len = 128\n";
const SMALL_TRAIN: &str = "batch_size = 8\nlearning_rate = 2e-3\neval_every = 0\n";

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let f = Fixture {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(f.path("world.toml"), SMALL_WORLD).unwrap();
        std::fs::write(f.path("model.toml"), SMALL_MODEL).unwrap();
        std::fs::write(f.path("train.toml"), SMALL_TRAIN).unwrap();
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn gen(&self, kind: &str, n: &str, name: &str) {
        let out = run(&[
            "gen-data",
            "--kind",
            kind,
            "--n",
            n,
            "--seed",
            "3",
            "--world",
            s(&self.path("world.toml")),
            "--out",
            s(&self.path(name)),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }

    fn train(&self) -> PathBuf {
        self.gen("train", "70", "train.jsonl");
        let ckpt = self.path("model.ckpt");
        let out = run(&[
            "train",
            "--data",
            s(&self.path("train.jsonl")),
            "--config",
            s(&self.path("train.toml")),
            "--model-config",
            s(&self.path("model.toml")),
            "--world",
            s(&self.path("world.toml")),
            "--out",
            s(&ckpt),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        ckpt
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(
        code(&run(&["gen-data", "--kind", "nonsense", "--out", "x"])),
        1
    );
    assert_eq!(
        code(&run(&[
            "eval", "--ckpt", "a", "--data", "b", "--out", "c", "--mode", "fast"
        ])),
        1
    );
    let out = bin()
        .args(["gen-data", "--out", "x"])
        .env("SLOTJUDGE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn help_and_version_exit_cleanly() {
    let out = run(&["--help"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in [
        "gen-data", "train", "eval", "judge", "rerank", "bench", "e2e",
    ] {
        assert!(text.contains(sub), "help lists {sub}");
    }
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn gen_data_writes_records_vocab_and_resolved_config() {
    let f = Fixture::new();
    let vocab = f.path("vocab.json");
    let out = run(&[
        "gen-data",
        "--kind",
        "dep",
        "--n",
        "12",
        "--out",
        s(&f.path("dep.jsonl")),
        "--vocab-out",
        s(&vocab),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(f.path("dep.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(vocab.exists());
    let resolved = read_json(&f.path("dep.jsonl.resolved.json"));
    assert_eq!(resolved["command"], "gen-data");
    assert_eq!(resolved["config"]["kind"], "dep");
    assert_eq!(resolved["config"]["world"]["max_objects"], 6);
}

#[test]
fn missing_and_malformed_inputs_exit_with_two() {
    let f = Fixture::new();
    let missing = f.path("nope.jsonl");
    assert_eq!(
        code(&run(&[
            "train",
            "--data",
            s(&missing),
            "--out",
            s(&f.path("m.ckpt"))
        ])),
        2
    );

    std::fs::write(f.path("bad.jsonl"), "{\"scene\": 3}\n").unwrap();
    let out = run(&[
        "train",
        "--data",
        s(&f.path("bad.jsonl")),
        "--out",
        s(&f.path("m.ckpt")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));

    std::fs::write(f.path("cfg.toml"), "learning_rat = 1.0\n").unwrap();
    f.gen("train", "20", "ok.jsonl");
    let out = run(&[
        "train",
        "--data",
        s(&f.path("ok.jsonl")),
        "--config",
        s(&f.path("cfg.toml")),
        "--world",
        s(&f.path("world.toml")),
        "--out",
        s(&f.path("m.ckpt")),
    ]);
    assert_eq!(code(&out), 2, "unknown config fields are rejected");
}

#[test]
fn mislabelled_training_data_is_rejected() {
    let f = Fixture::new();
    f.gen("train", "10", "train.jsonl");
    let text = std::fs::read_to_string(f.path("train.jsonl")).unwrap();
    let first = text.lines().next().unwrap();
    let flipped = if first.contains("\"answer\":\"yes\"") {
        first.replacen("\"answer\":\"yes\"", "\"answer\":\"no\"", 1)
    } else {
        first.replacen("\"answer\":\"no\"", "\"answer\":\"yes\"", 1)
    };
    std::fs::write(f.path("bad.jsonl"), flipped + "\n").unwrap();
    let out = run(&[
        "train",
        "--data",
        s(&f.path("bad.jsonl")),
        "--world",
        s(&f.path("world.toml")),
        "--out",
        s(&f.path("m.ckpt")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("label"));
}

#[test]
fn full_command_chain() {
    let f = Fixture::new();
    let ckpt = f.train();
    assert!(f.path("model.ckpt.history.csv").exists());
    assert_eq!(
        read_json(&f.path("model.ckpt.resolved.json"))["config"]["model"]["d_model"],
        32
    );

    f.gen("train", "14", "test.jsonl");
    f.gen("pairs", "10", "pairs.jsonl");
    let report = f.path("eval.json");
    let out = run(&[
        "eval",
        "--ckpt",
        s(&ckpt),
        "--data",
        s(&f.path("test.jsonl")),
        "--pairs",
        s(&f.path("pairs.jsonl")),
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(&report);
    assert_eq!(r["n_samples"], 14);
    assert!(r["acc_property"].as_f64().unwrap() >= 0.0);
    assert!(r["error_rank"].is_number());
    let positions = std::fs::read_to_string(f.path("eval.json.positions.csv")).unwrap();
    assert_eq!(positions.lines().count(), 1 + 4);

    for mode in ["single", "auto", "isolated"] {
        let judged = f.path(&format!("judged-{mode}.jsonl"));
        let out = run(&[
            "judge",
            "--ckpt",
            s(&ckpt),
            "--input",
            s(&f.path("test.jsonl")),
            "--mode",
            mode,
            "--out",
            s(&judged),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(&judged).unwrap();
        assert_eq!(text.lines().count(), 14);
        for line in text.lines() {
            let rec: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(rec["decisions"].as_array().unwrap().len(), 4);
            assert_eq!(rec["p_yes"].as_array().unwrap().len(), 4);
            let passes = rec["passes"].as_u64().unwrap();
            match mode {
                "single" => assert_eq!(passes, 1),
                "isolated" => assert_eq!(passes, 4),
                _ => assert!(passes >= 4),
            }
            assert!(rec["wall_ms"].as_f64().unwrap() >= 0.0);
        }
    }

    let ranked = f.path("rerank.csv");
    assert_eq!(
        code(&run(&[
            "rerank",
            "--ckpt",
            s(&ckpt),
            "--pairs",
            s(&f.path("pairs.jsonl")),
            "--out",
            s(&ranked)
        ])),
        0
    );
    let text = std::fs::read_to_string(&ranked).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.starts_with("pair,label,predicted,score_1,score_2,tie"));

    let table = f.path("bench.csv");
    let out = run(&[
        "bench",
        "--ckpt",
        s(&ckpt),
        "--n",
        "1,2",
        "--repeats",
        "1",
        "--samples",
        "1",
        "--world",
        s(&f.path("world.toml")),
        "--out",
        s(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read_to_string(&table).unwrap().lines().count(),
        1 + 2 * 3
    );

    let out = run(&["bench", "--ckpt", s(&ckpt), "--out", s(&table)]);
    assert_eq!(code(&out), 2, "default world has a different vocabulary");
}

#[test]
fn corrupted_checkpoint_exits_with_two() {
    let f = Fixture::new();
    let ckpt = f.train();
    f.gen("train", "3", "test.jsonl");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    let bad = f.path("bad.ckpt");
    std::fs::write(&bad, &bytes).unwrap();
    let out = run(&[
        "eval",
        "--ckpt",
        s(&bad),
        "--data",
        s(&f.path("test.jsonl")),
        "--out",
        s(&f.path("e.json")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));

    std::fs::write(&bad, &bytes[..n / 2]).unwrap();
    let out = run(&[
        "judge",
        "--ckpt",
        s(&bad),
        "--input",
        s(&f.path("test.jsonl")),
        "--out",
        s(&f.path("j.jsonl")),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn training_is_reproducible_across_thread_counts() {
    let f = Fixture::new();
    f.gen("train", "70", "train.jsonl");
    let mut digests = Vec::new();
    for threads in ["1", "2"] {
        let ckpt = f.path(&format!("m{threads}.ckpt"));
        let out = bin()
            .env("SLOTJUDGE_THREADS", threads)
            .args([
                "train",
                "--data",
                s(&f.path("train.jsonl")),
                "--config",
                s(&f.path("train.toml")),
                "--model-config",
                s(&f.path("model.toml")),
                "--world",
                s(&f.path("world.toml")),
                "--out",
                s(&ckpt),
            ])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        digests.push(std::fs::read(&ckpt).unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn end_to_end_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&["e2e", "--seed", "1", "--dir", s(dir.path())]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        for name in [
            "train.jsonl",
            "model.ckpt",
            "eval.json",
            "rerank.csv",
            "bench.csv",
            "summary.json",
        ] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
    }
    let sa = std::fs::read(a.path().join("summary.json")).unwrap();
    let sb = std::fs::read(b.path().join("summary.json")).unwrap();
    assert_eq!(sa, sb);
    assert_eq!(
        std::fs::read(a.path().join("model.ckpt")).unwrap(),
        std::fs::read(b.path().join("model.ckpt")).unwrap()
    );
}
