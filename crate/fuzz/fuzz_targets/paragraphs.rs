#![no_main]

use libfuzzer_sys::fuzz_target;
use segmatch::data::{parse_paragraphs, prepare_paragraph};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_paragraphs(text, "paragraphs.jsonl") {
        for r in &records {
            let _ = prepare_paragraph(r);
        }
    }
});
