//! The checked-in fuzz corpus seeds stay valid inputs.

use std::fs;
use std::path::PathBuf;

use segmatch::config::parse_run_config;
use segmatch::data::{
    parse_pairs, parse_paragraphs, parse_segments, prepare_paragraph, prepare_segment,
};
use segmatch::synth::parse_truth;
use segmatch::training::parse_checkpoint;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.display().to_string(),
                fs::read_to_string(&path).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn paragraph_and_segment_seeds_prepare() {
    for (name, text) in seeds("paragraphs") {
        for r in parse_paragraphs(&text, &name).unwrap() {
            prepare_paragraph(&r).unwrap();
        }
    }
    for (name, text) in seeds("segments") {
        for r in parse_segments(&text, &name).unwrap() {
            prepare_segment(&r).unwrap();
        }
    }
}

#[test]
fn remaining_seeds_parse() {
    for (name, text) in seeds("pairs") {
        parse_pairs(&text, &name).unwrap();
    }
    for (name, text) in seeds("truth") {
        parse_truth(&text, &name).unwrap();
    }
    for (name, text) in seeds("run_config") {
        parse_run_config(&text, &name).unwrap();
    }
    for (name, text) in seeds("checkpoint") {
        parse_checkpoint(&text, &name).unwrap();
    }
}
