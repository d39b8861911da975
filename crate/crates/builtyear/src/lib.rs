//! Dating historical buildings from image embeddings.
//!
//! The crate estimates construction years for buildings whose photographs
//! have already been embedded by a pretrained vision encoder. Annotations
//! arrive in mixed granularities — exact years, centuries, dynasty names —
//! and are unified as Gaussian distributions over years so that every label
//! contributes to the same training signal. A small adapter network on top
//! of the frozen embeddings is trained with a combined loss:
//!
//! * a mean squared error term on exactly dated samples,
//! * a pairwise KL term that aligns the predicted-year geometry with the
//!   label geometry, weighting each neighbourhood by label precision,
//! * an RBF regularizer over labelled/unlabelled adapter-output pairs that
//!   discourages the manifold from bunching up, letting undated images
//!   shape the feature space.
//!
//! See the `builtyear` binary for the end-to-end command-line workflow.

pub mod baseline;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod label;
pub mod loss;
pub mod model;
pub mod synth;
pub mod trainer;

pub use dataset::{attach_labels, attach_quality, load_embeddings, Dataset, DynastyTable, Sample};
pub use error::{Error, Result};
pub use label::{encode_century, encode_dynasty, encode_year, GaussianLabel};
pub use loss::LossConfig;
pub use model::{fit_standardization, AdapterKind, Model, ModelConfig, StandardizationParams};
pub use trainer::{predict, train, TrainConfig, TrainReport};
