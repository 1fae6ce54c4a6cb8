//! Decoders return errors on corrupted input instead of panicking.

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use segmatch::config::parse_run_config;
use segmatch::data::{
    parse_pairs, parse_paragraphs, parse_segments, prepare_paragraph, prepare_segment,
};
use segmatch::synth::parse_truth;
use segmatch::training::parse_checkpoint;

fn seed(target: &str) -> Vec<u8> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target)
        .join("full");
    fs::read(path).unwrap()
}

fn decode_all(target: &str, text: &str) {
    match target {
        "paragraphs" => {
            if let Ok(rs) = parse_paragraphs(text, "f") {
                rs.iter().for_each(|r| drop(prepare_paragraph(r)));
            }
        }
        "segments" => {
            if let Ok(rs) = parse_segments(text, "f") {
                rs.iter().for_each(|r| drop(prepare_segment(r)));
            }
        }
        "pairs" => drop(parse_pairs(text, "f")),
        "truth" => drop(parse_truth(text, "f")),
        "run_config" => drop(parse_run_config(text, "f")),
        _ => drop(parse_checkpoint(text, "f")),
    }
}

const TARGETS: [&str; 6] = [
    "paragraphs",
    "segments",
    "pairs",
    "truth",
    "run_config",
    "checkpoint",
];

/// Byte edits: overwrite, delete, or insert at a position.
fn edits() -> impl Strategy<Value = Vec<(u8, usize, u8)>> {
    prop::collection::vec((0u8..3, any::<usize>(), any::<u8>()), 1..8)
}

fn mutate(mut bytes: Vec<u8>, edits: &[(u8, usize, u8)]) -> Vec<u8> {
    for &(op, at, b) in edits {
        let i = at % (bytes.len() + 1);
        match op {
            0 if i < bytes.len() => bytes[i] = b,
            1 if i < bytes.len() => {
                bytes.remove(i);
            }
            _ => bytes.insert(i, b),
        }
    }
    bytes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mutated_seeds_never_panic(t in 0..TARGETS.len(), edits in edits()) {
        let bytes = mutate(seed(TARGETS[t]), &edits);
        decode_all(TARGETS[t], &String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn arbitrary_text_never_panics(t in 0..TARGETS.len(), text in "\\PC{0,200}") {
        decode_all(TARGETS[t], &text);
    }

    #[test]
    fn truncated_seeds_never_panic(t in 0..TARGETS.len(), cut in any::<usize>()) {
        let bytes = seed(TARGETS[t]);
        let cut = cut % (bytes.len() + 1);
        decode_all(TARGETS[t], &String::from_utf8_lossy(&bytes[..cut]));
    }
}
