#![no_main]

use commentq_core::corpus::parse_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_csv(data, "fuzz");
});
