//! Hyperdimensional classifiers with logarithmic class-axis compression.
//!
//! The crate covers the conventional one-prototype-per-class baseline
//! ([`hdc`]), k-ary codebook construction ([`codebook`]), the bundled
//! class-axis model with profile decoding and refinement ([`loghd`]),
//! feature-axis sparsification and quantization ([`compression`]), bit-flip
//! fault injection ([`faults`]) and an experiment harness ([`harness`]).

pub mod codebook;
pub mod compression;
pub mod error;
pub mod faults;
pub mod harness;
pub mod hdc;
pub mod loghd;
pub mod seed;
pub mod stored;

pub use codebook::{build_codebook, Codebook, CodebookSpec};
pub use compression::{hybridize, quantize, dequantize, QuantSpec, QuantizedState, SparsityMask, Sparsify};
pub use error::{Error, ErrorKind, Result};
pub use faults::{evaluate_under_faults, inject, matched_budget_configs, BudgetLedger, FaultSpec};
pub use hdc::{
    cosine, encode, predict_conventional, train_prototypes, EncodedSet, Encoder, EncoderSpec,
    FeatureScaler, Hypervector, LabeledDataset, Nonlinearity, PrototypeModel,
};
pub use loghd::{build_bundles, model_memory, LogHdModel, RefinementSpec};
pub use stored::{Method, StoredModel};
