#![no_main]

use commentq_core::features::parse_embeddings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_embeddings(data);
});
