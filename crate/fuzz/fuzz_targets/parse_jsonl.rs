#![no_main]

use commentq_core::corpus::parse_jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_jsonl(data, "fuzz");
});
