use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use segmatch::data::Dataset;
use segmatch::synth::SynthDataset;
use segmatch::training::{read_checkpoint, InputDims, TrainConfig, TrainState};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--movies", "3", "--seed", "7", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn generate_writes_files_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let stdout = ok(&["generate", "--movies", "5", "--seed", "7", "--out", s(&d)]);
    for f in [
        "paragraphs.jsonl",
        "segments.jsonl",
        "pairs.jsonl",
        "truth.jsonl",
    ] {
        assert!(d.join(f).is_file(), "{f} missing");
    }
    assert!(stdout.contains("# Movies"));
    assert!(stdout.contains("# Shots / seg."));
    let ds = Dataset::load(&d).unwrap();
    assert_eq!(ds.pairs.len(), 20);
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, &[]);
    gen(&b, &[]);
    for f in [
        "paragraphs.jsonl",
        "segments.jsonl",
        "pairs.jsonl",
        "truth.jsonl",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["generate", "--movies", "0", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 2);
    let out = run(&["generate", "--sigma", "-1", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 2);
    let out = run(&[
        "evaluate",
        "--checkpoint",
        "c",
        "--data",
        "d",
        "--out",
        "o",
        "--method",
        "bogus",
    ]);
    assert_eq!(code(&out), 2);
    let out = run(&[
        "match-graphs",
        "--data",
        "d",
        "--paragraph",
        "p",
        "--segment",
        "s",
        "--k",
        "0",
    ]);
    assert_eq!(code(&out), 2);
    let out = run(&["train", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 2, "no data directory anywhere");
}

#[test]
fn zero_epochs_writes_the_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    let ck = tmp.path().join("ck");
    let stdout = ok(&["train", "--data", s(&d), "--epochs", "0", "--out", s(&ck)]);
    assert!(!stdout.contains("loss"));
    let loaded = read_checkpoint(ck.join("checkpoint.json")).unwrap();
    let corpus = Dataset::load(&d).unwrap().prepare().unwrap();
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    let init = TrainState::init(InputDims::of(&corpus).unwrap(), &cfg);
    assert_eq!(loaded.state, init);
}

#[test]
fn training_logs_a_decreasing_loss_trend() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&["generate", "--movies", "5", "--seed", "3", "--out", s(&d)]);
    let stdout = ok(&[
        "train",
        "--data",
        s(&d),
        "--epochs",
        "30",
        "--out",
        s(&tmp.path().join("ck")),
    ]);
    let losses: Vec<f64> = stdout
        .lines()
        .filter(|l| l.starts_with("epoch"))
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 30);
    let head: f64 = losses[..5].iter().sum();
    let tail: f64 = losses[25..].iter().sum();
    assert!(tail < head, "{losses:?}");
}

#[test]
fn missing_pairs_file_is_a_parse_error_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    fs::remove_file(d.join("pairs.jsonl")).unwrap();
    let out = run(&[
        "train",
        "--data",
        s(&d),
        "--epochs",
        "1",
        "--out",
        s(&tmp.path().join("ck")),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pairs.jsonl"));
}

#[test]
fn malformed_line_reports_file_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    let path = d.join("segments.jsonl");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{\"id\": 3}\n");
    let bad_line = text.lines().count();
    fs::write(&path, text).unwrap();
    let out = run(&[
        "train",
        "--data",
        s(&d),
        "--epochs",
        "1",
        "--out",
        s(&tmp.path().join("ck")),
    ]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains(&format!("segments.jsonl:{bad_line}:")),
        "{err}"
    );
}

#[test]
fn evaluate_reports_and_writes_json() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    let ck = tmp.path().join("ck");
    ok(&["train", "--data", s(&d), "--epochs", "2", "--out", s(&ck)]);
    let ckf = ck.join("checkpoint.json");
    let r = tmp.path().join("r");
    let stdout = ok(&[
        "evaluate",
        "--checkpoint",
        s(&ckf),
        "--data",
        s(&d),
        "--out",
        s(&r),
    ]);
    assert!(stdout.contains("cross-movie"));
    assert!(stdout.contains("within-movie"));
    assert!(stdout.contains("Avg.MedR"));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.join("report.json")).unwrap()).unwrap();
    assert_eq!(doc["method"], "efm+cim");
    assert_eq!(doc["reports"].as_array().unwrap().len(), 2);

    let r2 = tmp.path().join("r2");
    ok(&[
        "evaluate",
        "--checkpoint",
        s(&ckf),
        "--data",
        s(&d),
        "--out",
        s(&r2),
    ]);
    assert_eq!(
        fs::read(r.join("report.json")).unwrap(),
        fs::read(r2.join("report.json")).unwrap()
    );
}

#[test]
fn single_pair_dataset_has_full_recall() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    ok(&[
        "generate",
        "--movies",
        "1",
        "--segments-per-movie",
        "1",
        "--out",
        s(&d),
    ]);
    let ck = tmp.path().join("ck");
    ok(&["train", "--data", s(&d), "--epochs", "0", "--out", s(&ck)]);
    for method in ["vse", "efm", "efm+cim"] {
        let stdout = ok(&[
            "evaluate",
            "--checkpoint",
            s(&ck.join("checkpoint.json")),
            "--data",
            s(&d),
            "--method",
            method,
            "--setting",
            "cross-movie",
            "--out",
            s(&tmp.path().join("r")),
        ]);
        let row = stdout
            .lines()
            .find(|l| l.starts_with("cross-movie"))
            .unwrap();
        assert_eq!(
            row.split_whitespace().nth(1),
            Some("100.00"),
            "{method}: {row}"
        );
    }
}

#[test]
fn evaluate_rejects_checkpoint_with_other_dims() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    gen(&a, &[]);
    gen(&b, &["--dim", "8"]);
    let ck = tmp.path().join("ck");
    ok(&["train", "--data", s(&a), "--epochs", "0", "--out", s(&ck)]);
    let out = run(&[
        "evaluate",
        "--checkpoint",
        s(&ck.join("checkpoint.json")),
        "--data",
        s(&b),
        "--out",
        s(&tmp.path().join("r")),
    ]);
    assert_eq!(code(&out), 4);
}

fn noiseless(dir: &Path) -> SynthDataset {
    gen(dir, &["--sigma", "0", "--distractors", "0"]);
    SynthDataset::load(dir).unwrap()
}

#[test]
fn align_prints_planted_ranges() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let synth = noiseless(&d);
    for pair in &synth.pairs {
        let stdout = ok(&[
            "align",
            "--data",
            s(&d),
            "--paragraph",
            &pair.paragraph.id,
            "--segment",
            &pair.segment.id,
        ]);
        let expected: Vec<String> = pair
            .alignment
            .sentence_ranges()
            .iter()
            .enumerate()
            .map(|(t, r)| {
                let (a, b) = r.expect("every planted sentence owns shots");
                format!("sentence {t}: shots {a}..={b}")
            })
            .collect();
        let got: Vec<&str> = stdout
            .lines()
            .filter(|l| l.starts_with("sentence"))
            .collect();
        assert_eq!(got, expected);
        assert!(stdout.lines().last().unwrap().starts_with("score "));
    }
}

#[test]
fn align_single_shot_segment_gives_one_range() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &["--shots", "1", "--sentences", "1"]);
    let synth = SynthDataset::load(&d).unwrap();
    let pair = &synth.pairs[0];
    assert_eq!(pair.segment.shots.len(), 1);
    let stdout = ok(&[
        "align",
        "--data",
        s(&d),
        "--paragraph",
        &pair.paragraph.id,
        "--segment",
        &pair.segment.id,
    ]);
    let ranges: Vec<&str> = stdout
        .lines()
        .filter(|l| l.contains("shots 0..=0"))
        .collect();
    assert_eq!(ranges.len(), 1, "{stdout}");
}

#[test]
fn align_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    let out = run(&[
        "align",
        "--data",
        s(&d),
        "--paragraph",
        "nope",
        "--segment",
        "s000-0",
    ]);
    assert_eq!(code(&out), 6);

    // sentence and shot features of different widths cannot be compared raw
    let ds = Dataset::load(&d).unwrap();
    let mut wide = ds.clone();
    for seg in &mut wide.segments {
        for shot in &mut seg.shots {
            let mut v = shot.as_slice().to_vec();
            v.push(0.0);
            *shot = segmatch::FeatureVector::new(v).unwrap();
        }
    }
    let w = tmp.path().join("w");
    wide.write(&w).unwrap();
    let out = run(&[
        "align",
        "--data",
        s(&w),
        "--paragraph",
        "p000-0",
        "--segment",
        "s000-0",
    ]);
    assert_eq!(code(&out), 4);
}

#[test]
fn match_graphs_exact_recovers_planted_map() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    let synth = noiseless(&d);
    for pair in &synth.pairs {
        let stdout = ok(&[
            "match-graphs",
            "--data",
            s(&d),
            "--paragraph",
            &pair.paragraph.id,
            "--segment",
            &pair.segment.id,
            "--exact",
        ]);
        assert!(stdout.contains("solver: exact"), "{stdout}");
        let got: Vec<(usize, usize)> = stdout
            .lines()
            .filter(|l| l.starts_with("visual "))
            .map(|l| {
                let f: Vec<&str> = l.split_whitespace().collect();
                let sem = f.iter().position(|t| *t == "semantic").unwrap();
                (f[1].parse().unwrap(), f[sem + 1].parse().unwrap())
            })
            .collect();
        assert_eq!(got, pair.node_map.pairs().to_vec());
        assert!(stdout.contains("pruning: nodes"));
    }
}

#[test]
fn match_graphs_with_empty_semantic_graph_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    let mut ds = Dataset::load(&d).unwrap();
    ds.paragraphs[0].graph.clear();
    ds.write(&d).unwrap();
    let stdout = ok(&[
        "match-graphs",
        "--data",
        s(&d),
        "--paragraph",
        &ds.paragraphs[0].id,
        "--segment",
        &ds.pairs[0].segment_id,
    ]);
    assert!(stdout.contains("no correspondences"));
    assert!(stdout.trim_end().ends_with("score 0.000000"));
}

#[test]
fn divergence_exits_5_and_keeps_a_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("d");
    gen(&d, &[]);
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[train]\nlearning_rate = 1e300\nepochs = 5\n").unwrap();
    let ck = tmp.path().join("ck");
    let out = run(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        s(&d),
        "--out",
        s(&ck),
    ]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read_checkpoint(ck.join("diverged.json")).is_ok());
    assert!(!ck.join("checkpoint.json").exists());
}

#[test]
fn bad_config_is_a_parse_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "[train]\nepochs = 1\nlearning_rat = 0.1\n").unwrap();
    let out = run(&[
        "train",
        "--config",
        s(&cfg),
        "--data",
        "d",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.toml:3:"));
}
