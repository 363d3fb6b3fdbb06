//! End-to-end runs of every subcommand through the in-process entry point.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tbcnn::synth::rule_corpus;
use tbcnn_cli::{run, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("tbcnn").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json_lines(s: &str) -> Vec<Value> {
    s.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn write_corpus(path: &Path, n: usize, seed: u64) {
    let mut f = std::fs::File::create(path).unwrap();
    for p in rule_corpus(n, 20, 4, seed) {
        writeln!(f, "{}", p.to_json()).unwrap();
    }
}

const SMALL: [&str; 10] = [
    "--dim-embed",
    "6",
    "--dim-conv",
    "6",
    "--dim-hidden",
    "5",
    "--batch",
    "8",
    "--lr",
    "0.1",
];

struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
    root: PathBuf,
}

fn trained(epochs: &str) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data.jsonl");
    let model = root.join("model.tbcp");
    write_corpus(&data, 40, 1);
    let metrics = root.join("metrics.jsonl");
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--valid",
        data.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--metrics",
        metrics.to_str().unwrap(),
        "--epochs",
        epochs,
    ];
    args.extend(SMALL);
    let (code, _, err) = cli(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    let log = json_lines(&std::fs::read_to_string(&metrics).unwrap());
    assert_eq!(log.len(), epochs.parse::<usize>().unwrap());
    assert!(log.iter().all(|r| r["valid_acc"].is_number()));
    Fixture {
        _dir: dir,
        data,
        model,
        root,
    }
}

#[test]
fn eval_reports_accuracy_over_all_pairs() {
    let fx = trained("2");
    let (code, out, _) = cli(&["eval", "--model", fx.model.to_str().unwrap(), "--data", fx.data.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let ev = &json_lines(&out)[0];
    assert_eq!(ev["count"], 40);
    let acc = ev["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let confusion: u64 = ev["confusion"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(confusion, 40);
}

#[test]
fn predict_writes_one_normalized_line_per_pair() {
    let fx = trained("1");
    let out_path = fx.root.join("pred.jsonl");
    let (code, _, _) = cli(&[
        "predict",
        "--model",
        fx.model.to_str().unwrap(),
        "--data",
        fx.data.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let lines = json_lines(&std::fs::read_to_string(out_path).unwrap());
    assert_eq!(lines.len(), 40);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["line"], i + 1);
        let probs: Vec<f64> = l["probs"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(l.get("m").is_none());
        assert!(["entailment", "neutral", "contradiction"].contains(&l["label"].as_str().unwrap()));
    }
}

#[test]
fn identical_sentences_give_a_zero_difference_block() {
    let fx = trained("1");
    let same = fx.root.join("same.jsonl");
    let tree = r#"{"tokens":["w1","w2","w3"],"heads":[2,0,2],"rels":["r0","root","r1"]}"#;
    std::fs::write(&same, format!("{{\"premise\":{tree},\"hypothesis\":{tree}}}\n")).unwrap();
    let (code, out, err) = cli(&["predict", "--model", fx.model.to_str().unwrap(), "--data", same.to_str().unwrap(), "--debug-m"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let m: Vec<f64> = json_lines(&out)[0]["m"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    // cat, diff, prod blocks of n_h = 5
    assert_eq!(m.len(), 20);
    assert_eq!(&m[..5], &m[5..10]);
    assert!(m[10..15].iter().all(|&x| x == 0.0));
    for d in 0..5 {
        assert_eq!(m[15 + d], m[d] * m[d]);
    }
}

#[test]
fn embed_and_timing_outputs() {
    let fx = trained("1");
    let (code, out, _) = cli(&["embed", "--model", fx.model.to_str().unwrap(), "--data", fx.data.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let lines = json_lines(&out);
    assert_eq!(lines.len(), 40);
    assert!(lines.iter().all(|l| l["premise"].as_array().unwrap().len() == 5 && l["hypothesis"].as_array().unwrap().len() == 5));

    let (code, out, err) = cli(&["timing", "--model", fx.model.to_str().unwrap(), "--data", fx.data.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    // 40 pairs is below the stable-measurement threshold
    assert!(!err.is_empty());
    let share = json_lines(&out)[0]["match_share_pct"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&share));
}

#[test]
fn stats_counts_trees() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    write_corpus(&data, 12, 2);
    let (code, out, _) = cli(&["stats", "--data", data.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = &json_lines(&out)[0];
    assert_eq!(r["premise"]["trees"], 12);
    assert_eq!(r["hypothesis"]["trees"], 12);
    assert_eq!(r["all"]["trees"], 24);
}

#[test]
fn sweep_reports_ten_dropout_rates() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    write_corpus(&data, 15, 3);
    let mut args = vec!["sweep", "--data", data.to_str().unwrap(), "--valid", data.to_str().unwrap(), "--epochs", "1"];
    args.extend(SMALL);
    let (code, out, err) = cli(&args);
    assert_eq!(code, EXIT_OK, "{err}");
    let rows = json_lines(&out);
    assert_eq!(rows.len(), 10);
    let rates: Vec<f64> = rows.iter().map(|r| r["dropout"].as_f64().unwrap()).collect();
    assert!(rates.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn gradcheck_passes_and_names_the_bound() {
    let (code, out, _) = cli(&["gradcheck", "--dim", "6", "--instances", "3", "--seed", "1"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("max_rel_err < 1e-4"), "{out}");
}

#[test]
fn training_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    write_corpus(&data, 30, 4);
    let bytes: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let model = dir.path().join(format!("{name}.tbcp"));
            let metrics = dir.path().join(format!("{name}.jsonl"));
            let mut args = vec![
                "train",
                "--data",
                data.to_str().unwrap(),
                "--out",
                model.to_str().unwrap(),
                "--metrics",
                metrics.to_str().unwrap(),
                "--epochs",
                "2",
                "--dropout",
                "0.3",
                "--seed",
                "9",
            ];
            args.extend(SMALL);
            assert_eq!(cli(&args).0, EXIT_OK);
            std::fs::read(model).unwrap()
        })
        .collect();
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn exit_codes() {
    assert_eq!(cli(&["train", "--no-such-flag"]).0, EXIT_USAGE);
    assert_eq!(cli(&[]).0, EXIT_USAGE);
    let (code, out, _) = cli(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("gradcheck"));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(cli(&["stats", "--data", missing.to_str().unwrap()]).0, EXIT_DATA);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    let (code, _, err) = cli(&["stats", "--data", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains('1'), "{err}");

    let junk_model = dir.path().join("junk.tbcp");
    std::fs::write(&junk_model, b"nope").unwrap();
    assert_eq!(cli(&["eval", "--model", junk_model.to_str().unwrap(), "--data", bad.to_str().unwrap()]).0, EXIT_DATA);
}
