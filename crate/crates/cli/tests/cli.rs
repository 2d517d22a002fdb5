use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dialex_core::classifier::{Forest, ForestParams, Node, Tree};

fn dialex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dialex"))
        .args(args)
        .env_remove("DIALEX_JOBS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dialex(args);
    assert!(
        out.status.success(),
        "dialex {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Data rows (non-comment lines) of a TSV file.
fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

/// Ten identical (positive) and ten unrelated (negative) pairs.
fn separable_pairs(dir: &Path) -> PathBuf {
    let words = [
        "haus", "baum", "wasser", "kirche", "brot", "milch", "stein", "garten", "vogel", "fenster",
    ];
    let others = [
        "qyx", "zzpt", "kwj", "vvxq", "pfft", "jjy", "qqzw", "xkv", "zyqp", "wvvk",
    ];
    let mut text = String::new();
    for (w, o) in words.iter().zip(others) {
        text.push_str(&format!("{w}\t{w}\ttranslation\n{w}\t{o}\tunrelated\n"));
    }
    let path = dir.join("pairs.tsv");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn features_rows_and_identity_vector() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("p.tsv");
    fs::write(&pairs, "haus\thaus\ttranslation\nhaus\thüsli\ttranslation\nbaum\tstein\tunrelated\n").unwrap();
    let out = dir.path().join("f.tsv");
    ok(&["features", s(&pairs), "-o", s(&out)]);
    let rows = rows(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.len() == 15));
    let identity: Vec<f64> = rows[0][2..14].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(identity, [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    assert_eq!(rows[0][14], "1");
    assert_eq!(rows[2][14], "0");
}

#[test]
fn missing_input_exits_2_with_path() {
    let out = dialex(&["features", "/nonexistent/pairs.tsv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/pairs.tsv"));
}

#[test]
fn malformed_row_exits_1_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("p.tsv");
    fs::write(&pairs, "haus\thaus\ttranslation\nbroken line\n").unwrap();
    let out = dialex(&["features", s(&pairs)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(dialex(&["no-such-command"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let pairs = separable_pairs(dir.path());
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    let out = dialex(&["--config", s(&cfg), "features", s(&pairs)]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg, "threshold = 1.5\n").unwrap();
    let model = dir.path().join("m.json");
    let out = dialex(&["--config", s(&cfg), "train", s(&pairs), "-o", s(&model)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!model.exists(), "no output on config failure");
}

#[test]
fn train_then_eval_on_separable_data() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = separable_pairs(dir.path());
    let model = dir.path().join("m.json");
    let metrics = dir.path().join("m.tsv");
    ok(&["train", s(&pairs), "-o", s(&model), "--trees", "10"]);
    ok(&["eval-bli", s(&pairs), "--model", s(&model), "-o", s(&metrics)]);
    let rows = rows(&metrics);
    assert_eq!(rows[0][..4], ["model", "precision", "recall", "f1"]);
    assert_eq!(rows[1][3], "1.0000");
}

#[test]
fn training_is_deterministic_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = separable_pairs(dir.path());
    let m = |name: &str| dir.path().join(name);
    ok(&["--jobs", "1", "train", s(&pairs), "-o", s(&m("a.json")), "--seed", "7"]);
    ok(&["--jobs", "8", "train", s(&pairs), "-o", s(&m("b.json")), "--seed", "7"]);
    ok(&["train", s(&pairs), "-o", s(&m("c.json")), "--seed", "7"]);
    let a = fs::read(m("a.json")).unwrap();
    assert_eq!(a, fs::read(m("b.json")).unwrap());
    assert_eq!(a, fs::read(m("c.json")).unwrap());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = separable_pairs(dir.path());
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "seeds = [4, 5]\n[forest]\nn_trees = 5\nmax_features = 2\n").unwrap();
    let out = dir.path().join("e.tsv");
    ok(&[
        "--config", s(&cfg), "eval-bli", s(&pairs), "--trees", "3", "-o", s(&out),
    ]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# n_trees = 3"));
    assert!(text.contains("# max_features = 2"));
    assert!(text.contains("# seeds = [4, 5]"));
    assert!(text.lines().any(|l| l.starts_with("forest\t5\t")));
}

#[test]
fn cross_with_one_dialect_has_equal_rows() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = separable_pairs(dir.path());
    let out = dir.path().join("cross");
    let ds = format!("bar={}", s(&pairs));
    ok(&["cross", "--dataset", &ds, "-o", s(&out), "--trees", "5"]);
    for name in ["precision", "recall", "f1"] {
        let rows = rows(&out.join(format!("{name}.tsv")));
        assert_eq!(rows.len(), 3, "header plus two rows");
        assert_eq!(rows[1][0], "bar");
        assert_eq!(rows[2][0], "ALL");
        assert_eq!(rows[1][1], rows[2][1]);
    }
}

#[test]
fn ablate_at_full_fraction_matches_plain_eval() {
    let dir = tempfile::tempdir().unwrap();
    // Noisy pairs so F1 is not trivially 1.
    let mut text = String::new();
    for i in 0..60 {
        let w = format!("wort{}", i % 17);
        let v = format!("w{}rt{}", ["o", "a", "u"][i % 3], (i * 7) % 23);
        let label = if i % 3 == 0 { "translation" } else { "unrelated" };
        text.push_str(&format!("{w}\t{v}\t{label}\n"));
    }
    let pairs = dir.path().join("p.tsv");
    fs::write(&pairs, text).unwrap();
    let eval = dir.path().join("e.tsv");
    let curve = dir.path().join("c.tsv");
    ok(&["eval-bli", s(&pairs), "--seeds", "3", "--trees", "7", "-o", s(&eval)]);
    ok(&[
        "ablate", s(&pairs), "--fractions", "1.0", "--seeds", "3", "--split-seed", "3",
        "--trees", "7", "-o", s(&curve),
    ]);
    let eval_f1 = rows(&eval)
        .into_iter()
        .find(|r| r[0] == "forest" && r[1] == "mean")
        .unwrap()[4]
        .clone();
    let curve = rows(&curve);
    assert_eq!(curve.len(), 2);
    assert_eq!(curve[1][2], eval_f1);
}

fn always_positive_model(path: &Path) {
    let tree = Tree::new(vec![Node::Leaf { counts: [0.0, 1.0] }]).unwrap();
    let forest = Forest::from_trees(ForestParams::default(), vec![tree]).unwrap();
    fs::write(path, forest.to_bytes()).unwrap();
}

#[test]
fn induce_with_always_positive_model_keeps_k_per_lemma() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    always_positive_model(&model);
    let lemmas = dir.path().join("lemmas.txt");
    fs::write(&lemmas, "haus\nbaum\nwasser\n").unwrap();
    let vocab = dir.path().join("vocab.tsv");
    let mut v = String::new();
    for (i, t) in ["hus", "huus", "boam", "wasa", "wassa", "hoas", "baam", "kia"].iter().enumerate() {
        v.push_str(&format!("{t}\t{}\n", 100 - i));
    }
    fs::write(&vocab, v).unwrap();
    let dict = dir.path().join("d.tsv");
    let stats = dir.path().join("s.tsv");
    ok(&[
        "induce", "--lemmas", s(&lemmas), "--vocab", s(&vocab), "--model", s(&model),
        "--dialect", "bar", "--k", "4", "-o", s(&dict), "--stats", s(&stats),
    ]);
    assert_eq!(rows(&dict).len(), 3 * 4);
    let st = rows(&stats);
    assert_eq!(st[1], ["bar", "3", "12", "4.00"]);

    let summary = dir.path().join("s2.tsv");
    ok(&["stats", "--dict", &format!("bar={}", s(&dict)), "-o", s(&summary)]);
    assert_eq!(rows(&summary), st);
}

/// Two queries; the only relevant document of q1 spells `haus` as `hüsli`.
fn qe_dataset(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    fs::write(
        dir.join("docs.jsonl"),
        concat!(
            "{\"id\":\"d1\",\"contents\":\"s hüsli am see\"}\n",
            "{\"id\":\"d2\",\"contents\":\"altes auto\"}\n",
            "{\"id\":\"d3\",\"contents\":\"altes buch\"}\n",
        ),
    )
    .unwrap();
    fs::write(dir.join("queries.tsv"), "q1\taltes Haus\nq2\tbuch\n").unwrap();
    fs::write(dir.join("qrels.txt"), "q1 0 d1 1\nq2 0 d3 1\n").unwrap();
    fs::write(dir.join("dict.tsv"), "haus\thüsli\nhaus\thaus\n").unwrap();
}

#[test]
fn search_with_and_without_expansion() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("als");
    qe_dataset(&data);
    let index = dir.path().join("idx");
    ok(&["index", s(&data.join("docs.jsonl")), "-o", s(&index)]);

    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let plain = dir.path().join("plain.run");
    let with_empty = dir.path().join("empty.run");
    let expanded = dir.path().join("qe.run");
    let queries = data.join("queries.tsv");
    ok(&["search", "--index", s(&index), "--queries", s(&queries), "-o", s(&plain)]);
    ok(&[
        "search", "--index", s(&index), "--queries", s(&queries), "--dict", s(&empty), "-o",
        s(&with_empty),
    ]);
    let out = ok(&[
        "search", "--index", s(&index), "--queries", s(&queries), "--dict",
        s(&data.join("dict.tsv")), "-o", s(&expanded),
    ]);
    assert_eq!(fs::read(&plain).unwrap(), fs::read(&with_empty).unwrap());
    assert!(String::from_utf8_lossy(&out.stderr).contains("expanded 1 of 2"));

    let qrels = data.join("qrels.txt");
    let base_eval = dir.path().join("base.tsv");
    let qe_eval = dir.path().join("qe.tsv");
    ok(&["eval-ir", "--run", s(&plain), "--qrels", s(&qrels), "-o", s(&base_eval)]);
    ok(&["eval-ir", "--run", s(&expanded), "--qrels", s(&qrels), "-o", s(&qe_eval)]);
    let q1 = |p: &Path| rows(p).into_iter().find(|r| r[0] == "q1").unwrap();
    assert_eq!(q1(&base_eval)[2], "0.0000");
    assert_eq!(q1(&qe_eval)[2], "1.0000");
}

#[test]
fn qe_experiment_reports_positive_recall_delta() {
    let dir = tempfile::tempdir().unwrap();
    qe_dataset(&dir.path().join("als"));
    let out = dir.path().join("qe.tsv");
    let ds = format!("als={}", s(&dir.path().join("als")));
    ok(&["qe-experiment", "--dataset", &ds, "-o", s(&out)]);
    let rows = rows(&out);
    let header = &rows[0];
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let als = &rows[1];
    assert_eq!(als[0], "als");
    assert!(als[col("recall100_delta")].parse::<f64>().unwrap() > 0.0);
    assert_eq!(als[col("n_aug")], "1");
    assert_eq!(als[col("n_query")], "2");
    assert_eq!(als[col("pct_aug")], "50.00");
    assert_eq!(rows[2][0], "ALL");
}

#[test]
fn qe_experiment_rejects_unknown_judged_document() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("als");
    qe_dataset(&data);
    fs::write(data.join("qrels.txt"), "q1 0 d9 1\nq2 0 d3 1\n").unwrap();
    let out = dir.path().join("qe.tsv");
    let res = dialex(&["qe-experiment", "--dataset", &format!("als={}", s(&data)), "-o", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("d9"));
    assert!(!out.exists());
}

#[test]
fn outputs_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = separable_pairs(dir.path());
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    ok(&["eval-bli", s(&pairs), "--trees", "5", "-o", s(&a)]);
    ok(&["--jobs", "3", "eval-bli", s(&pairs), "--trees", "5", "-o", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
