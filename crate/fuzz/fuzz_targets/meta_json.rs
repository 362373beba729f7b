#![no_main]
use geoaudit::bundle::Meta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(meta) = Meta::from_json(data) {
        let text = serde_json::to_vec(&meta).unwrap();
        assert_eq!(Meta::from_json(&text).unwrap(), meta);
    }
});
