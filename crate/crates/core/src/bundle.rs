//! On-disk model head bundle.
//!
//! A bundle is a directory holding `meta.json` plus headerless little-endian
//! row-major matrix files:
//!
//! | file          | shape   | element             |
//! |---------------|---------|---------------------|
//! | `W.bin`       | n × f   | `dtype`             |
//! | `b.bin`       | n       | `dtype`             |
//! | `train_x.bin` | N × f   | `dtype`             |
//! | `train_y.bin` | N       | `u32`               |
//! | `eval_x.bin`  | M × f   | `dtype` (optional)  |
//! | `eval_y.bin`  | M       | `u32` (optional)    |
//!
//! Shapes come from `meta.json`. Any matrix may instead be supplied as
//! `<name>.csv` (first line: column count, then one comma-separated row per
//! line) as long as it has at most [`CSV_MAX_ENTRIES`] entries.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;

pub const FORMAT_VERSION: u32 = 1;
pub const CSV_MAX_ENTRIES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(format!("unknown dtype `{other}` (expected f32 or f64)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHead {
    /// n × f
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub class_names: Vec<String>,
}

impl ModelHead {
    pub fn n_classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Head with class names `"0"`, `"1"`, …
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Self {
        let class_names = (0..weights.rows()).map(|k| k.to_string()).collect();
        Self {
            weights,
            bias,
            class_names,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub x: Matrix,
    pub labels: Option<Vec<u32>>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub train: usize,
    #[serde(default)]
    pub eval: usize,
}

/// Contents of `meta.json`. Unknown keys (for example an extractor manifest)
/// are preserved across load/save.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub version: u32,
    pub n: usize,
    pub f: usize,
    #[serde(default)]
    pub dtype: Dtype,
    pub class_names: Vec<String>,
    pub counts: Counts,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub eval_labeled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_l2_bound: Option<f64>,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Meta {
    /// Parses `meta.json`. The version is checked before the rest of the
    /// schema so that future layouts report `VersionUnsupported`.
    pub fn from_json(bytes: &[u8]) -> Result<Self, BundleError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| BundleError::InvalidMeta(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| BundleError::InvalidMeta("missing integer `version`".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(BundleError::VersionUnsupported(version));
        }
        serde_json::from_value(value).map_err(|e| BundleError::InvalidMeta(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub head: ModelHead,
    pub train: EmbeddingSet,
    pub eval: Option<EmbeddingSet>,
    pub phi_l2_bound: Option<f64>,
    pub dtype: Dtype,
    pub extra_meta: serde_json::Map<String, serde_json::Value>,
}

impl ModelBundle {
    pub fn new(head: ModelHead, train: EmbeddingSet, eval: Option<EmbeddingSet>) -> Self {
        Self {
            head,
            train,
            eval,
            phi_l2_bound: None,
            dtype: Dtype::F32,
            extra_meta: Default::default(),
        }
    }

    pub fn meta(&self) -> Meta {
        Meta {
            version: FORMAT_VERSION,
            n: self.head.n_classes(),
            f: self.head.feature_dim(),
            dtype: self.dtype,
            class_names: self.head.class_names.clone(),
            counts: Counts {
                train: self.train.len(),
                eval: self.eval.as_ref().map_or(0, EmbeddingSet::len),
            },
            eval_labeled: self.eval.as_ref().is_some_and(|e| e.labels.is_some()),
            phi_l2_bound: self.phi_l2_bound,
            extra: self.extra_meta.clone(),
        }
    }
}

/// Which part of a bundle a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    W,
    B,
    Train,
    TrainLabels,
    Eval,
    EvalLabels,
    ClassNames,
    PhiBound,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::W => "W",
            Field::B => "b",
            Field::Train => "train",
            Field::TrainLabels => "train_y",
            Field::Eval => "eval",
            Field::EvalLabels => "eval_y",
            Field::ClassNames => "class_names",
            Field::PhiBound => "phi_l2_bound",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    TooFewClasses { n: usize },
    EmptyFeatureDim,
    ShapeMismatch { field: Field, expected: usize, found: usize },
    NonFiniteValue { field: Field, row: usize },
    MissingLabels { field: Field },
    LabelOutOfRange { field: Field, row: usize, label: u32 },
    MissingClass(usize),
    NegativeBound,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewClasses { n } => write!(f, "TooFewClasses: W has {n} rows, need at least 2"),
            Violation::EmptyFeatureDim => write!(f, "EmptyFeatureDim: W has zero columns"),
            Violation::ShapeMismatch {
                field,
                expected,
                found,
            } => write!(f, "ShapeMismatch({field}): expected {expected}, found {found}"),
            Violation::NonFiniteValue { field, row } => write!(f, "NonFiniteValue({field},{row})"),
            Violation::MissingLabels { field } => write!(f, "MissingLabels({field})"),
            Violation::LabelOutOfRange { field, row, label } => {
                write!(f, "LabelOutOfRange({field},{row}): label {label}")
            }
            Violation::MissingClass(k) => write!(f, "MissingClass({k}): no training sample"),
            Violation::NegativeBound => write!(f, "NegativeBound: phi_l2_bound must be finite and >= 0"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("missing file `{0}`")]
    MissingFile(String),
    #[error("shape mismatch in `{file}`: expected {expected} bytes, found {found}")]
    ShapeMismatch {
        file: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {field} row {row}")]
    NonFiniteValue { field: Field, row: usize },
    #[error("class {0} has no training samples")]
    MissingClass(usize),
    #[error("unsupported bundle version {0}")]
    VersionUnsupported(u64),
    #[error("invalid meta.json: {0}")]
    InvalidMeta(String),
    #[error("invalid CSV: {0}")]
    Csv(String),
    #[error("invalid bundle: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<Violation> for BundleError {
    fn from(v: Violation) -> Self {
        match v {
            Violation::NonFiniteValue { field, row } => BundleError::NonFiniteValue { field, row },
            Violation::MissingClass(k) => BundleError::MissingClass(k),
            other => BundleError::Invalid(vec![other]),
        }
    }
}

/// Where bundle files come from: a directory, or an in-memory map (used by
/// tests and fuzzing).
pub trait BundleSource {
    fn read(&self, name: &str) -> io::Result<Option<Vec<u8>>>;
}

impl BundleSource for Path {
    fn read(&self, name: &str) -> io::Result<Option<Vec<u8>>> {
        match fs::read(self.join(name)) {
            Ok(b) => Ok(Some(b)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl BundleSource for PathBuf {
    fn read(&self, name: &str) -> io::Result<Option<Vec<u8>>> {
        self.as_path().read(name)
    }
}

impl BundleSource for HashMap<String, Vec<u8>> {
    fn read(&self, name: &str) -> io::Result<Option<Vec<u8>>> {
        Ok(self.get(name).cloned())
    }
}

/// Decodes a headerless little-endian row-major matrix.
pub fn decode_matrix(bytes: &[u8], rows: usize, cols: usize, dtype: Dtype, file: &str) -> Result<Matrix, BundleError> {
    let entries = rows
        .checked_mul(cols)
        .ok_or_else(|| BundleError::InvalidMeta(format!("{file}: shape overflows")))?;
    let expected = entries
        .checked_mul(dtype.size())
        .ok_or_else(|| BundleError::InvalidMeta(format!("{file}: shape overflows")))?;
    if bytes.len() != expected {
        return Err(BundleError::ShapeMismatch {
            file: file.to_string(),
            expected,
            found: bytes.len(),
        });
    }
    let data = match dtype {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(Matrix::from_vec(rows, cols, data).expect("length checked"))
}

pub fn encode_matrix(m: &Matrix, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.data().len() * dtype.size());
    for &v in m.data() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn decode_labels(bytes: &[u8], rows: usize, file: &str) -> Result<Vec<u32>, BundleError> {
    let expected = rows
        .checked_mul(4)
        .ok_or_else(|| BundleError::InvalidMeta(format!("{file}: shape overflows")))?;
    if bytes.len() != expected {
        return Err(BundleError::ShapeMismatch {
            file: file.to_string(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn encode_labels(labels: &[u32]) -> Vec<u8> {
    labels.iter().flat_map(|l| l.to_le_bytes()).collect()
}

/// Parses the CSV fallback: first line is the column count, then one row per
/// line. Blank lines are ignored.
pub fn parse_csv_matrix(text: &str) -> Result<Matrix, BundleError> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| BundleError::Csv("empty file".into()))?;
    let cols: usize = header
        .parse()
        .map_err(|_| BundleError::Csv(format!("header `{header}` is not a column count")))?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (lineno, line) in lines.enumerate() {
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| BundleError::Csv(format!("line {}: bad number `{}`", lineno + 2, cell.trim())))?;
            data.push(v);
            if data.len() > CSV_MAX_ENTRIES {
                return Err(BundleError::Csv(format!("more than {CSV_MAX_ENTRIES} entries")));
            }
        }
        if data.len() - before != cols {
            return Err(BundleError::Csv(format!(
                "line {}: expected {cols} columns, found {}",
                lineno + 2,
                data.len() - before
            )));
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, cols, data).expect("row lengths checked"))
}

fn read_matrix<S: BundleSource + ?Sized>(
    src: &S,
    name: &str,
    rows: usize,
    cols: usize,
    dtype: Dtype,
) -> Result<Option<Matrix>, BundleError> {
    let bin = format!("{name}.bin");
    if let Some(bytes) = src.read(&bin)? {
        return decode_matrix(&bytes, rows, cols, dtype, &bin).map(Some);
    }
    let csv = format!("{name}.csv");
    if let Some(bytes) = src.read(&csv)? {
        let text = std::str::from_utf8(&bytes).map_err(|_| BundleError::Csv(format!("{csv}: not UTF-8")))?;
        let m = parse_csv_matrix(text)?;
        // A single-column CSV may also stand for a vector stored as one line.
        let m = if m.rows() * m.cols() == rows * cols && (m.rows(), m.cols()) != (rows, cols) {
            Matrix::from_vec(rows, cols, m.data().to_vec()).expect("same length")
        } else {
            m
        };
        if (m.rows(), m.cols()) != (rows, cols) {
            return Err(BundleError::ShapeMismatch {
                file: csv,
                expected: rows * cols,
                found: m.rows() * m.cols(),
            });
        }
        return Ok(Some(m));
    }
    Ok(None)
}

fn read_labels<S: BundleSource + ?Sized>(src: &S, name: &str, rows: usize) -> Result<Option<Vec<u32>>, BundleError> {
    let bin = format!("{name}.bin");
    if let Some(bytes) = src.read(&bin)? {
        return decode_labels(&bytes, rows, &bin).map(Some);
    }
    let csv = format!("{name}.csv");
    if let Some(bytes) = src.read(&csv)? {
        let text = std::str::from_utf8(&bytes).map_err(|_| BundleError::Csv(format!("{csv}: not UTF-8")))?;
        let m = parse_csv_matrix(text)?;
        if m.rows() * m.cols() != rows {
            return Err(BundleError::ShapeMismatch {
                file: csv,
                expected: rows,
                found: m.rows() * m.cols(),
            });
        }
        let mut out = Vec::with_capacity(rows);
        for &v in m.data() {
            if v < 0.0 || v.fract() != 0.0 || v > f64::from(u32::MAX) {
                return Err(BundleError::Csv(format!("{csv}: label {v} is not a u32")));
            }
            out.push(v as u32);
        }
        return Ok(Some(out));
    }
    Ok(None)
}

fn require<T>(v: Option<T>, name: &str) -> Result<T, BundleError> {
    v.ok_or_else(|| BundleError::MissingFile(format!("{name}.bin")))
}

/// Decodes and validates a bundle from any source.
pub fn decode_bundle<S: BundleSource + ?Sized>(src: &S) -> Result<ModelBundle, BundleError> {
    decode_bundle_as(src, None)
}

/// As [`decode_bundle`], reading binary files as `dtype` when given instead
/// of the dtype recorded in the metadata.
pub fn decode_bundle_as<S: BundleSource + ?Sized>(src: &S, dtype: Option<Dtype>) -> Result<ModelBundle, BundleError> {
    let meta_bytes = src
        .read("meta.json")?
        .ok_or_else(|| BundleError::MissingFile("meta.json".into()))?;
    let mut meta = Meta::from_json(&meta_bytes)?;
    if let Some(d) = dtype {
        meta.dtype = d;
    }
    let (n, f) = (meta.n, meta.f);

    let weights = require(read_matrix(src, "W", n, f, meta.dtype)?, "W")?;
    let bias = require(read_matrix(src, "b", n, 1, meta.dtype)?, "b")?;
    let train_x = require(read_matrix(src, "train_x", meta.counts.train, f, meta.dtype)?, "train_x")?;
    let train_y = require(read_labels(src, "train_y", meta.counts.train)?, "train_y")?;
    let eval = if meta.counts.eval > 0 {
        let x = require(read_matrix(src, "eval_x", meta.counts.eval, f, meta.dtype)?, "eval_x")?;
        let labels = if meta.eval_labeled {
            Some(require(read_labels(src, "eval_y", meta.counts.eval)?, "eval_y")?)
        } else {
            read_labels(src, "eval_y", meta.counts.eval)?
        };
        Some(EmbeddingSet { x, labels })
    } else {
        None
    };

    let bundle = ModelBundle {
        head: ModelHead {
            weights,
            bias: bias.data().to_vec(),
            class_names: meta.class_names,
        },
        train: EmbeddingSet {
            x: train_x,
            labels: Some(train_y),
        },
        eval,
        phi_l2_bound: meta.phi_l2_bound,
        dtype: meta.dtype,
        extra_meta: meta.extra,
    };
    if let Some(v) = validate_bundle(&bundle).into_iter().next() {
        return Err(v.into());
    }
    Ok(bundle)
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle, BundleError> {
    decode_bundle(path.as_ref())
}

pub fn load_bundle_as(path: impl AsRef<Path>, dtype: Option<Dtype>) -> Result<ModelBundle, BundleError> {
    decode_bundle_as(path.as_ref(), dtype)
}

/// Writes the bundle in binary layout using `bundle.dtype`.
pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    let path = path.as_ref();
    fs::create_dir_all(path)?;
    let meta = serde_json::to_vec_pretty(&bundle.meta()).map_err(|e| BundleError::InvalidMeta(e.to_string()))?;
    fs::write(path.join("meta.json"), meta)?;
    let dt = bundle.dtype;
    fs::write(path.join("W.bin"), encode_matrix(&bundle.head.weights, dt))?;
    let b = Matrix::from_vec(bundle.head.bias.len(), 1, bundle.head.bias.clone()).expect("vector");
    fs::write(path.join("b.bin"), encode_matrix(&b, dt))?;
    fs::write(path.join("train_x.bin"), encode_matrix(&bundle.train.x, dt))?;
    let labels = bundle.train.labels.as_deref().unwrap_or(&[]);
    fs::write(path.join("train_y.bin"), encode_labels(labels))?;
    if let Some(eval) = &bundle.eval {
        fs::write(path.join("eval_x.bin"), encode_matrix(&eval.x, dt))?;
        if let Some(y) = &eval.labels {
            fs::write(path.join("eval_y.bin"), encode_labels(y))?;
        }
    }
    Ok(())
}

fn check_rows(m: &Matrix, field: Field, out: &mut Vec<Violation>) {
    if let Some(row) = m.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        out.push(Violation::NonFiniteValue { field, row });
    }
}

/// Lists every invariant violation; empty iff the bundle is valid.
pub fn validate_bundle(bundle: &ModelBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = bundle.head.weights.rows();
    let f = bundle.head.weights.cols();
    if n < 2 {
        out.push(Violation::TooFewClasses { n });
    }
    if f < 1 {
        out.push(Violation::EmptyFeatureDim);
    }
    if bundle.head.bias.len() != n {
        out.push(Violation::ShapeMismatch {
            field: Field::B,
            expected: n,
            found: bundle.head.bias.len(),
        });
    }
    if bundle.head.class_names.len() != n {
        out.push(Violation::ShapeMismatch {
            field: Field::ClassNames,
            expected: n,
            found: bundle.head.class_names.len(),
        });
    }
    check_rows(&bundle.head.weights, Field::W, &mut out);
    if let Some(i) = bundle.head.bias.iter().position(|v| !v.is_finite()) {
        out.push(Violation::NonFiniteValue { field: Field::B, row: i });
    }

    let sets = [
        (Some(&bundle.train), Field::Train, Field::TrainLabels),
        (bundle.eval.as_ref(), Field::Eval, Field::EvalLabels),
    ];
    for (set, field, label_field) in sets {
        let Some(set) = set else { continue };
        if set.x.cols() != f {
            out.push(Violation::ShapeMismatch {
                field,
                expected: f,
                found: set.x.cols(),
            });
        }
        check_rows(&set.x, field, &mut out);
        match &set.labels {
            None if field == Field::Train => out.push(Violation::MissingLabels { field: label_field }),
            None => {}
            Some(labels) => {
                if labels.len() != set.x.rows() {
                    out.push(Violation::ShapeMismatch {
                        field: label_field,
                        expected: set.x.rows(),
                        found: labels.len(),
                    });
                }
                if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= n) {
                    out.push(Violation::LabelOutOfRange {
                        field: label_field,
                        row,
                        label,
                    });
                }
            }
        }
    }

    if let Some(labels) = &bundle.train.labels {
        let mut seen = vec![false; n];
        for &l in labels {
            if let Some(s) = seen.get_mut(l as usize) {
                *s = true;
            }
        }
        out.extend(seen.iter().enumerate().filter(|(_, &s)| !s).map(|(k, _)| Violation::MissingClass(k)));
    }

    if let Some(bound) = bundle.phi_l2_bound {
        if !(bound.is_finite() && bound >= 0.0) {
            out.push(Violation::NegativeBound);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(n: usize, f: usize, labels: Vec<u32>) -> ModelBundle {
        let w = Matrix::from_vec(n, f, (0..n * f).map(|v| v as f64 * 0.5 - 1.0).collect()).unwrap();
        let rows = labels.len();
        let train = EmbeddingSet {
            x: Matrix::from_vec(rows, f, (0..rows * f).map(|v| (v as f64).sin()).collect()).unwrap(),
            labels: Some(labels),
        };
        ModelBundle::new(ModelHead::new(w, vec![0.25; n]), train, None)
    }

    fn as_map(dir: &Path) -> HashMap<String, Vec<u8>> {
        fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect()
    }

    #[test]
    fn round_trip_three_classes() {
        let labels: Vec<u32> = (0..30).map(|i| i % 3).collect();
        let mut b = tiny(3, 4, labels);
        b.dtype = Dtype::F64;
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.head.n_classes(), 3);
        assert_eq!(back, b);
    }

    #[test]
    fn f32_round_trip_is_exact_at_f32_precision() {
        let b = tiny(2, 3, vec![0, 1, 1, 0]);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        for (x, y) in back.train.x.data().iter().zip(b.train.x.data()) {
            assert_eq!(*x, f64::from(*y as f32));
        }
        // Second round trip is the identity.
        let dir2 = tempfile::tempdir().unwrap();
        save_bundle(&back, dir2.path()).unwrap();
        assert_eq!(load_bundle(dir2.path()).unwrap(), back);
    }

    #[test]
    fn truncated_weight_file_is_shape_mismatch() {
        let b = tiny(3, 4, vec![0, 1, 2]);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        let mut files = as_map(dir.path());
        files.get_mut("W.bin").unwrap().pop();
        match decode_bundle(&files) {
            Err(BundleError::ShapeMismatch { file, expected, found }) => {
                assert_eq!(file, "W.bin");
                assert_eq!(expected, found + 1);
            }
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn missing_class_is_reported() {
        let b = tiny(3, 2, vec![0, 0, 2]);
        assert_eq!(validate_bundle(&b), vec![Violation::MissingClass(1)]);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(BundleError::MissingClass(1))));
    }

    #[test]
    fn missing_file_and_version() {
        let b = tiny(2, 2, vec![0, 1]);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        let mut files = as_map(dir.path());
        files.remove("train_y.bin");
        assert!(matches!(decode_bundle(&files), Err(BundleError::MissingFile(f)) if f == "train_y.bin"));

        let mut files = as_map(dir.path());
        let meta = String::from_utf8(files["meta.json"].clone()).unwrap();
        files.insert("meta.json".into(), meta.replace("\"version\": 1", "\"version\": 7").into_bytes());
        assert!(matches!(decode_bundle(&files), Err(BundleError::VersionUnsupported(7))));
    }

    #[test]
    fn nan_in_eval_row_is_named() {
        let mut b = tiny(2, 2, vec![0, 1]);
        let mut x = Matrix::zeros(9, 2);
        x.set(7, 1, f64::NAN);
        b.eval = Some(EmbeddingSet { x, labels: None });
        assert_eq!(
            validate_bundle(&b),
            vec![Violation::NonFiniteValue {
                field: Field::Eval,
                row: 7
            }]
        );
        let dir = tempfile::tempdir().unwrap();
        b.dtype = Dtype::F64;
        save_bundle(&b, dir.path()).unwrap();
        assert!(matches!(
            load_bundle(dir.path()),
            Err(BundleError::NonFiniteValue { field: Field::Eval, row: 7 })
        ));
    }

    #[test]
    fn single_class_head() {
        let b = tiny(1, 2, vec![0]);
        assert_eq!(validate_bundle(&b), vec![Violation::TooFewClasses { n: 1 }]);
    }

    #[test]
    fn valid_bundle_has_no_violations() {
        assert!(validate_bundle(&tiny(2, 3, vec![1, 0, 1])).is_empty());
    }

    #[test]
    fn csv_fallback() {
        let b = tiny(2, 2, vec![0, 1]);
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        let mut files = as_map(dir.path());
        files.remove("W.bin");
        files.insert("W.csv".into(), b"2\n1.5, -2\n0,4\n".to_vec());
        files.remove("train_y.bin");
        files.insert("train_y.csv".into(), b"1\n0\n1\n".to_vec());
        let back = decode_bundle(&files).unwrap();
        assert_eq!(back.head.weights.data(), &[1.5, -2.0, 0.0, 4.0]);
        assert_eq!(back.train.labels.unwrap(), vec![0, 1]);
    }

    #[test]
    fn csv_errors() {
        assert!(parse_csv_matrix("").is_err());
        assert!(parse_csv_matrix("x\n1").is_err());
        assert!(parse_csv_matrix("2\n1,2,3").is_err());
        assert!(parse_csv_matrix("2\n1,abc").is_err());
        let m = parse_csv_matrix("3\n1,2,3\n\n4,5,6\n").unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
    }

    #[cfg(unix)]
    #[test]
    fn read_only_destination_is_io_error() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let ro = dir.path().join("ro");
        fs::create_dir(&ro).unwrap();
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o555)).unwrap();
        let target = ro.join("bundle");
        let res = save_bundle(&tiny(2, 2, vec![0, 1]), &target);
        // Running as root ignores directory permissions; only assert when the
        // OS actually enforced them.
        if fs::metadata(&target).is_err() {
            assert!(matches!(res, Err(BundleError::Io(_))));
        }
        fs::set_permissions(&ro, fs::Permissions::from_mode(0o755)).unwrap();
    }
}
