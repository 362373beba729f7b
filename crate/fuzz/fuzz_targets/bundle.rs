#![no_main]
use std::collections::HashMap;

use geoaudit::bundle::{decode_bundle, validate_bundle};
use libfuzzer_sys::fuzz_target;

const FILES: [&str; 7] = ["meta.json", "W", "b", "train_x", "train_y", "eval_x", "eval_y"];

// Files are separated by `\0\xff`; a part starting with `csv:` is stored as
// the CSV variant of that file.
fuzz_target!(|data: &[u8]| {
    let mut src: HashMap<String, Vec<u8>> = HashMap::new();
    let mut rest = data;
    for name in FILES {
        let end = rest.windows(2).position(|w| w == b"\0\xff").unwrap_or(rest.len());
        let part = &rest[..end];
        let key = match (name, part.strip_prefix(b"csv:")) {
            ("meta.json", _) => name.to_string(),
            (_, Some(_)) => format!("{name}.csv"),
            (_, None) => format!("{name}.bin"),
        };
        let body = if key.ends_with(".csv") { &part[4..] } else { part };
        src.insert(key, body.to_vec());
        rest = rest.get(end + 2..).unwrap_or(&[]);
    }
    if let Ok(b) = decode_bundle(&src) {
        assert!(validate_bundle(&b).is_empty());
    }
});
