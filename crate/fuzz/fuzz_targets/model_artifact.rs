#![no_main]

use commentq_core::artifact::ModelArtifact;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = ModelArtifact::from_json(text);
    }
});
