#![no_main]
use geoaudit::detector::{detect, DetectorModel, FeatureTable, FEATURE_COLUMNS};
use geoaudit::Matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(model) = serde_json::from_slice::<DetectorModel>(data) else { return };
    let x = Matrix::from_vec(1, FEATURE_COLUMNS.len(), vec![0.5; FEATURE_COLUMNS.len()]).unwrap();
    let columns = FEATURE_COLUMNS.iter().map(|c| c.to_string()).collect();
    let table = FeatureTable::new(columns, vec!["x".into()], x, None);
    let _ = detect(&model, &table);
});
