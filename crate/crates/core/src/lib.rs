//! Feature-space geometry auditing for linear classifier heads.
//!
//! Given a head `z = W x + b` and the training embeddings that produced it,
//! the crate measures where a sample sits relative to the per-class training
//! hulls and to the decision boundaries, turns those distances into an
//! ambiguity score with an abstention rule, and evaluates closed-form
//! relationships between boundary distance, softmax confidence and the volume
//! of high-confidence regions.

pub mod ambiguity;
pub mod boundary;
pub mod bounds;
pub mod bundle;
pub mod detector;
pub mod hull;
pub mod linalg;
pub mod lp;
pub mod matrix;
pub mod mc;
pub mod qp;
pub mod region;
pub mod space;
pub mod synthetic;

pub use bundle::{load_bundle, save_bundle, validate_bundle, BundleError, EmbeddingSet, ModelBundle, ModelHead};
pub use matrix::Matrix;
