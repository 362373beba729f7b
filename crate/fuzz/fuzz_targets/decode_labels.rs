#![no_main]
use geoaudit::bundle::{decode_labels, encode_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    for rows in [data.len() / 4, data.len() / 4 + 1] {
        if let Ok(l) = decode_labels(data, rows, "fuzz.bin") {
            assert_eq!(encode_labels(&l), data);
        }
    }
});
