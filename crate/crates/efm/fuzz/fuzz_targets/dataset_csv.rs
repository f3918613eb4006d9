//! Sample-CSV parser must reject arbitrary bytes without panicking. The
//! first two bytes pick small (k, d) so the fuzzer exercises several schemas.

#![no_main]

use efm::dataset::{parse_dataset_csv, DatasetMeta};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let k = 1 + (data[0] % 3) as usize;
    let d = 1 + (data[1] % 3) as usize;
    let meta = DatasetMeta {
        k,
        d,
        omega_min: vec![-1e9; k],
        omega_max: vec![1e9; k],
    };
    let _ = parse_dataset_csv(&data[2..], &meta, "fuzz");
});
