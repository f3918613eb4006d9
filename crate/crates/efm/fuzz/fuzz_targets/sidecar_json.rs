#![no_main]

use efm::dataset::parse_sidecar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_sidecar(data, "fuzz");
});
