#![no_main]

use commentq_core::augment::parse_completion;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((comment, code)) = parse_completion(text) {
            assert!(!comment.trim().is_empty() && !code.trim().is_empty());
        }
    }
});
