#![no_main]

use commentq_core::features::FittedFeaturizer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = FittedFeaturizer::from_json(text);
    }
});
