#![no_main]
use geoaudit::bundle::{decode_matrix, encode_matrix, Dtype};
use libfuzzer_sys::fuzz_target;

// First byte: dtype bit and row count; the rest is the payload.
fuzz_target!(|data: &[u8]| {
    let Some((&head, body)) = data.split_first() else { return };
    let dtype = if head & 1 == 0 { Dtype::F32 } else { Dtype::F64 };
    let rows = (head >> 1) as usize % 16 + 1;
    let cols = body.len() / dtype.size() / rows;
    if let Ok(m) = decode_matrix(body, rows, cols, dtype, "fuzz.bin") {
        assert_eq!(encode_matrix(&m, dtype).len(), rows * cols * dtype.size());
    }
});
