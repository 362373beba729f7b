#![no_main]
use geoaudit::ambiguity::{read_profiles_jsonl, write_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = read_profiles_jsonl(text) {
        let mut out = Vec::new();
        write_jsonl(&p, &mut out).unwrap();
        let again = read_profiles_jsonl(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(again.len(), p.len());
    }
});
