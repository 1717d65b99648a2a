#![no_main]

use commentq_core::extractor::{extract_pairs, ExtractionConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let source = String::from_utf8_lossy(data);
    let out = extract_pairs(&source, &ExtractionConfig::default());
    for pair in &out.pairs {
        assert!(pair.line >= 1);
        assert!(!pair.comment.is_empty());
    }
});
