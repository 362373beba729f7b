use std::collections::HashMap;
use std::path::PathBuf;

use geoaudit::ambiguity::read_profiles_jsonl;
use geoaudit::bundle::{decode_bundle, decode_labels, decode_matrix, parse_csv_matrix, Dtype, Meta};

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    out.sort();
    out.into_iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn meta_seeds_parse() {
    for s in seeds("meta_json") {
        Meta::from_json(&s).unwrap();
    }
}

#[test]
fn matrix_and_label_seeds_decode() {
    for s in seeds("decode_matrix") {
        let dtype = if s[0] & 1 == 0 { Dtype::F32 } else { Dtype::F64 };
        let rows = (s[0] >> 1) as usize % 16 + 1;
        let cols = (s.len() - 1) / dtype.size() / rows;
        decode_matrix(&s[1..], rows, cols, dtype, "seed").unwrap();
    }
    for s in seeds("decode_labels") {
        decode_labels(&s, s.len() / 4, "seed").unwrap();
    }
}

#[test]
fn csv_seeds_parse() {
    for s in seeds("csv_matrix") {
        parse_csv_matrix(std::str::from_utf8(&s).unwrap()).unwrap();
    }
}

#[test]
fn bundle_seed_decodes() {
    let names = ["meta.json", "W.bin", "b.bin", "train_x.bin", "train_y.bin", "eval_x.bin", "eval_y.bin"];
    for s in seeds("bundle") {
        let mut src = HashMap::new();
        let mut rest = &s[..];
        for name in names {
            let end = rest.windows(2).position(|w| w == b"\0\xff").unwrap_or(rest.len());
            src.insert(name.to_string(), rest[..end].to_vec());
            rest = rest.get(end + 2..).unwrap_or(&[]);
        }
        let b = decode_bundle(&src).unwrap();
        assert_eq!(b.head.n_classes(), 3);
    }
}

#[test]
fn profile_seeds_parse() {
    for s in seeds("profiles_jsonl") {
        assert!(!read_profiles_jsonl(std::str::from_utf8(&s).unwrap()).unwrap().is_empty());
    }
}
