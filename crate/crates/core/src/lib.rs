//! Clustering of categorical sequences through tree-ensemble terminal-node
//! encodings.
//!
//! The pipeline: [`segmentation::segment`] slides a window over every
//! sequence, [`forest::train_forest`] fits an autoregressive tree ensemble
//! that predicts each window's next token, [`encoder::encode`] counts how
//! many windows of each sequence fall in every terminal node, and
//! [`clustering::ward_linkage`] clusters the resulting count vectors.

pub mod baselines;
pub mod clustering;
pub mod counts;
pub mod dataset;
pub mod distance;
pub mod encoder;
pub mod error;
pub mod forest;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod simulation;
pub mod validation;

pub use clustering::{
    cut, estimate_k, to_newick, ward_linkage, ClusterAssignment, Dendrogram, ValidityIndex,
};
pub use counts::CountMatrix;
pub use dataset::{load_sequences, Alphabet, CategoricalSequence, InputFormat, SequenceDataset};
pub use distance::{distance_matrix, DistanceMatrix, StringMetric, VectorMetric};
pub use encoder::{encode, encode_corpus, EncodeConfig, SequenceRepresentation, Variant};
pub use error::{Error, Result};
pub use forest::{train_forest, ForestModel, ForestParams};
pub use pipeline::{compute, Method, PipelineConfig};
pub use segmentation::{segment, SegmentedMatrix};
pub use simulation::{gen_batch, preset, run_experiment, ScenarioSpec};
pub use validation::{evaluate, ValidationReport};
