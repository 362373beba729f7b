#![no_main]
use geoaudit::bundle::parse_csv_matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_csv_matrix(text) {
            assert!(m.data().iter().all(|v| v.is_finite()));
        }
    }
});
