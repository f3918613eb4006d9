#![no_main]

use efm::training::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = TrainConfig::from_json_bytes(data);
});
