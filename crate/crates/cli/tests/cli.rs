use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const WORDS: [&str; 12] = [
    "the",
    "a",
    "cat",
    "dog",
    "sat",
    "on",
    "mat",
    "red",
    "ran@@ ning",
    "jump@@ ed",
    "hou@@ se",
    "and",
];

/// Small deterministic corpus where the target copies the source.
fn sentences(n: usize, salt: u64) -> Vec<String> {
    let mut state = 0x9e37_79b9_7f4a_7c15u64 ^ salt;
    let mut next = move |m: u64| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state % m
    };
    (0..n)
        .map(|_| {
            let len = 2 + next(5) as usize;
            (0..len)
                .map(|_| WORDS[next(WORDS.len() as u64) as usize])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

struct Desk {
    dir: TempDir,
}

impl Desk {
    fn new() -> Desk {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, lines: &[String]| {
            fs::write(dir.path().join(name), lines.join("\n") + "\n").unwrap();
        };
        let train = sentences(40, 1);
        let test = sentences(12, 2);
        let alt: Vec<String> = test
            .iter()
            .map(|s| s.split(' ').skip(1).collect::<Vec<_>>().join(" "))
            .map(|s| if s.is_empty() { "cat".to_string() } else { s })
            .collect();
        write("train.src", &train);
        write("train.tgt", &train);
        write("test.src", &test);
        write("test.tgt", &test);
        write("test.alt", &alt);
        write("stop.txt", &["the".into(), "a".into(), "and".into()]);
        Desk { dir }
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_string_lossy().into_owned()
    }

    fn eval_args(&self) -> Vec<String> {
        vec![
            "--src".into(),
            self.path("test.src"),
            "--tgt".into(),
            self.path("test.tgt"),
        ]
    }

    fn train_args(&self) -> Vec<String> {
        vec![
            "--train-src".into(),
            self.path("train.src"),
            "--train-tgt".into(),
            self.path("train.tgt"),
        ]
    }

    /// Trains a small model once into `model/`.
    fn model(&self) -> String {
        let model = self.path("model/model.bin");
        if !Path::new(&model).exists() {
            let mut args = vec!["train", "--epochs", "2", "--hash-bits", "14", "--out-dir"]
                .into_iter()
                .map(String::from)
                .collect::<Vec<_>>();
            args.push(self.path("model"));
            args.extend(self.train_args());
            ok(&levt(&args));
        }
        model
    }
}

fn levt<S: AsRef<str>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levt"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn read(path: &str) -> String {
    fs::read_to_string(path).unwrap()
}

fn rows(tsv: &str) -> Vec<Vec<String>> {
    tsv.lines()
        .map(|l| l.split('\t').map(String::from).collect())
        .collect()
}

/// Runs `cmd` twice into fresh output directories and returns both trees.
fn run_twice(desk: &Desk, cmd: &str, extra: &[String]) -> [BTreeMap<PathBuf, Vec<u8>>; 2] {
    [0, 1].map(|k| {
        let out = desk.path(&format!("{cmd}_{k}"));
        let mut args = vec![cmd.to_string(), "--out-dir".into(), out.clone()];
        args.extend(extra.iter().cloned());
        ok(&levt(&args));
        files(Path::new(&out))
    })
}

#[test]
fn every_command_is_byte_identical_across_runs() {
    let desk = Desk::new();
    let model = desk.model();
    let with_model = |more: &[&str]| {
        let mut a = vec![
            "--model".to_string(),
            model.clone(),
            "--seed".into(),
            "7".into(),
        ];
        a.extend(desk.eval_args());
        a.extend(more.iter().map(|s| s.to_string()));
        a
    };
    let mut train = vec![
        "--epochs".to_string(),
        "1".into(),
        "--hash-bits".into(),
        "12".into(),
    ];
    train.extend(desk.train_args());
    let mut report = vec![
        "--hyp".to_string(),
        desk.path("test.alt"),
        "--tgt".into(),
        desk.path("test.tgt"),
    ];
    report.extend(desk.train_args());
    let cases: Vec<(&str, Vec<String>)> = vec![
        ("train", train),
        (
            "decode",
            with_model(&["--stopwords", &desk.path("stop.txt")]),
        ),
        ("probe-length", with_model(&["--topk", "3"])),
        (
            "probe-subword",
            with_model(&["--word-ratios", "0.2", "--random-ratios", "0.5"]),
        ),
        ("probe-deletion", with_model(&["--tau-grid", "0.3,0.7"])),
        ("corrupt", with_model(&[])),
        ("report", report),
    ];
    for (cmd, extra) in cases {
        let [a, b] = run_twice(&desk, cmd, &extra);
        assert!(!a.is_empty(), "{cmd} wrote nothing");
        assert_eq!(a, b, "{cmd} output differs between runs");
    }
}

#[test]
fn oracle_decode_reproduces_references() {
    let desk = Desk::new();
    let out = desk.path("dec");
    let mut args = vec![
        "decode".to_string(),
        "--policy".into(),
        "oracle".into(),
        "--out-dir".into(),
        out.clone(),
    ];
    args.extend(desk.eval_args());
    ok(&levt(&args));
    assert_eq!(
        read(&format!("{out}/hyps.txt")),
        read(&desk.path("test.tgt"))
    );
    let bleu = rows(&read(&format!("{out}/bleu.tsv")));
    assert_eq!(bleu[0][..3], ["level", "score", "p1"]);
    for row in &bleu[1..] {
        assert_eq!(row[1], "100.0000");
        assert_eq!(row[6], "1.0000");
    }
    let traces = read(&format!("{out}/traces.jsonl"));
    assert_eq!(traces.lines().count(), 12);
    for line in traces.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["rounds"].as_u64().unwrap() <= 2);
        assert_eq!(v["termination"], "fixpoint");
        assert_eq!(v["stages"][0]["tag"], "del_1");
    }
}

#[test]
fn max_rounds_one_stops_after_one_round() {
    let desk = Desk::new();
    let out = desk.path("dec");
    let mut args = vec![
        "decode",
        "--policy",
        "oracle",
        "--max-rounds",
        "1",
        "--out-dir",
        &out,
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(desk.eval_args());
    ok(&levt(&args));
    for line in read(&format!("{out}/traces.jsonl")).lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["rounds"], 1);
        let tags: Vec<_> = v["stages"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["tag"].clone())
            .collect();
        assert_eq!(tags, ["del_1", "pld_1", "tok_1"]);
    }
}

#[test]
fn oracle_subword_probe_is_perfect() {
    let desk = Desk::new();
    let out = desk.path("ps");
    let mut args = vec![
        "probe-subword".to_string(),
        "--policy".into(),
        "oracle".into(),
        "--out-dir".into(),
        out.clone(),
    ];
    args.extend(desk.eval_args());
    ok(&levt(&args));
    let table = rows(&read(&format!("{out}/subword_probe.tsv")));
    let col = |name: &str| table[0].iter().position(|h| h == name).unwrap();
    // 5 subword + 5 fullword + 10 random ratios
    assert_eq!(table.len(), 1 + 20);
    for row in &table[1..] {
        for name in [
            "pld_acc",
            "tok1_prec",
            "tok1_rec",
            "final_prec",
            "final_rec",
        ] {
            let v = &row[col(name)];
            assert!(v == "1.0000" || v == "NA", "{name} = {v} in {row:?}");
        }
        assert_eq!(row[col("final_bleu")], "100.0000");
    }
    let probe_files = fs::read_dir(format!("{out}/probes")).unwrap().count();
    assert_eq!(probe_files, 20);
    let kinds: Vec<_> = table[1..]
        .iter()
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect();
    assert!(kinds.contains(&("subword".into(), "0.05".into())));
    assert!(kinds.contains(&("fullword".into(), "0.25".into())));
    assert!(kinds.contains(&("random".into(), "1.00".into())));
}

#[test]
fn probe_length_reports_k_ranks_and_oracle_length() {
    let desk = Desk::new();
    let out = desk.path("pl");
    let mut args = vec![
        "probe-length",
        "--policy",
        "oracle",
        "--topk",
        "5",
        "--out-dir",
        &out,
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(desk.eval_args());
    args.extend(desk.train_args());
    ok(&levt(&args));
    let table = rows(&read(&format!("{out}/length_probe.tsv")));
    let ranks: Vec<_> = table
        .iter()
        .filter(|r| r[0] == "rank" && r[2] == "argmax")
        .collect();
    assert_eq!(ranks.len(), 5);
    let tgtlen = table
        .iter()
        .find(|r| r[0] == "predictor" && r[1] == "tgtlen")
        .unwrap();
    let bleu = table[0].iter().position(|h| h == "final_bleu").unwrap();
    assert_eq!(tgtlen[bleu], "100.0000");
    assert_eq!(ranks[0][bleu], "100.0000");
    let models = rows(&read(&format!("{out}/length_models.tsv")));
    assert_eq!(models[1][0], "ratio");
    assert_eq!(models[1][1], "1.0000");
}

#[test]
fn probe_deletion_writes_threshold_grid() {
    let desk = Desk::new();
    let out = desk.path("pd");
    let mut args = vec!["probe-deletion", "--policy", "oracle", "--out-dir", &out]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    args.extend(desk.eval_args());
    ok(&levt(&args));
    let grid = rows(&read(&format!("{out}/deletion_threshold.tsv")));
    assert_eq!(grid.len(), 1 + 19);
    assert_eq!(grid[1][0], "0.05");
    assert_eq!(grid[19][0], "0.95");
    let inits = rows(&read(&format!("{out}/deletion_init.tsv")));
    let regimes: Vec<_> = inits[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(regimes, ["empty", "reference", "no_accuracy", "no_fluency"]);
    let bleu = inits[0].iter().position(|h| h == "final_bleu").unwrap();
    for row in &inits[1..] {
        assert_eq!(row[bleu], "100.0000", "{row:?}");
    }
}

#[test]
fn zero_epochs_writes_untrained_model() {
    let desk = Desk::new();
    let out = desk.path("m0");
    let mut args = vec![
        "train",
        "--epochs",
        "0",
        "--hash-bits",
        "10",
        "--out-dir",
        &out,
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(desk.train_args());
    ok(&levt(&args));
    assert!(Path::new(&format!("{out}/model.bin")).exists());
    assert!(Path::new(&format!("{out}/vocab.txt")).exists());
    assert_eq!(read(&format!("{out}/loss.tsv")).lines().count(), 1);
}

#[test]
fn config_file_supplies_flags_and_command_line_wins() {
    let desk = Desk::new();
    let cfg = desk.path("run.conf");
    fs::write(
        &cfg,
        format!(
            "# decode settings\npolicy = oracle\nmax_rounds = 1\nsrc = {}\ntgt = {}\nout_dir = {}\n",
            desk.path("test.src"),
            desk.path("test.tgt"),
            desk.path("from_config"),
        ),
    )
    .unwrap();
    ok(&levt(&["decode", "--config", &cfg]));
    let summary = rows(&read(&desk.path("from_config/summary.tsv")));
    assert_eq!(summary[1][1], "1.0000");

    ok(&levt(&[
        "decode",
        "--config",
        &cfg,
        "--max-rounds",
        "10",
        "--out-dir",
        &desk.path("flags"),
    ]));
    let summary = rows(&read(&desk.path("flags/summary.tsv")));
    assert_ne!(summary[1][1], "1.0000");
}

#[test]
fn errors_exit_nonzero_with_one_line() {
    let desk = Desk::new();
    let usage = levt(&["decode", "--no-such-flag"]);
    assert_eq!(usage.status.code(), Some(2));

    let mut args = vec!["decode".to_string()];
    args.extend(desk.eval_args());
    let missing_model = levt(&args);
    assert_eq!(missing_model.status.code(), Some(1));
    let err = String::from_utf8(missing_model.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error: "));

    let bad = levt(&[
        "decode",
        "--src",
        &desk.path("absent.src"),
        "--tgt",
        &desk.path("test.tgt"),
    ]);
    assert_eq!(bad.status.code(), Some(1));

    let mut tm = vec![
        "decode".to_string(),
        "--policy".into(),
        "oracle".into(),
        "--init".into(),
        "tm".into(),
    ];
    tm.extend(desk.eval_args());
    assert_eq!(levt(&tm).status.code(), Some(1));

    let bad_tau = levt(&[
        "decode",
        "--policy",
        "oracle",
        "--del-threshold",
        "1.5",
        "--src",
        &desk.path("test.src"),
        "--tgt",
        &desk.path("test.tgt"),
        "--out-dir",
        &desk.path("x"),
    ]);
    assert_eq!(bad_tau.status.code(), Some(1));
}

#[test]
fn tm_init_and_external_length() {
    let desk = Desk::new();
    for (extra, dir) in [
        (vec!["--init", "tm", "--alt-tgt"], "tm"),
        (vec!["--length-pred", "tgtlen"], "len"),
    ] {
        let out = desk.path(dir);
        let mut args = vec![
            "decode".to_string(),
            "--policy".into(),
            "oracle".into(),
            "--out-dir".into(),
            out.clone(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        if dir == "tm" {
            args.push(desk.path("test.alt"));
        }
        args.extend(desk.eval_args());
        ok(&levt(&args));
        assert_eq!(
            read(&format!("{out}/hyps.txt")),
            read(&desk.path("test.tgt"))
        );
    }
}

#[test]
fn corrupt_preserves_corpus_shape() {
    let desk = Desk::new();
    let out = desk.path("c");
    let mut args = vec![
        "corrupt".to_string(),
        "--seed".into(),
        "3".into(),
        "--out-dir".into(),
        out.clone(),
    ];
    args.extend(desk.eval_args());
    ok(&levt(&args));
    let refs: Vec<String> = read(&desk.path("test.tgt"))
        .lines()
        .map(String::from)
        .collect();
    let sorted = |s: &str| {
        let mut v: Vec<&str> = s.split(' ').collect();
        v.sort();
        v.join(" ")
    };
    let fluency: Vec<String> = read(&format!("{out}/no_fluency.txt"))
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(fluency.len(), refs.len());
    for (f, r) in fluency.iter().zip(&refs) {
        assert_eq!(sorted(f), sorted(r));
    }
    let accuracy: Vec<String> = read(&format!("{out}/no_accuracy.txt"))
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(accuracy.len(), refs.len());
    let mut a = accuracy.clone();
    let mut b = refs.clone();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}

#[test]
fn post_deletion_length_grows_with_threshold() {
    let desk = Desk::new();
    let model = desk.model();
    let out = desk.path("sweep");
    let mut args = vec!["probe-deletion", "--model", &model, "--out-dir", &out]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    args.extend(desk.eval_args());
    ok(&levt(&args));
    let grid = rows(&read(&format!("{out}/deletion_threshold.tsv")));
    let col = grid[0].iter().position(|h| h == "del2_len").unwrap();
    let lens: Vec<f64> = grid[1..]
        .iter()
        .filter(|r| r[col] != "NA")
        .map(|r| r[col].parse().unwrap())
        .collect();
    assert!(!lens.is_empty());
    assert!(lens.windows(2).all(|w| w[0] <= w[1]), "{lens:?}");
}
