#![no_main]

use efm::dataset::parse_points_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_points_csv(data, "fuzz");
});
