//! Skin-lesion classification on frozen CNN embeddings.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`dataset`]: ground-truth CSV parsing and image/label pairing.
//! 2. [`preprocess`]: decoding, 299x299 bilinear resizing and augmentation.
//! 3. [`embedding`]: 1000-component representation vectors from a frozen
//!    network (or a deterministic stub), cached as CSV.
//! 4. [`mlp`], [`train`] and [`eval`]: two independent 1000-1000-2 softmax
//!    classifiers trained with Adam, scored by accuracy and ROC AUC.

pub mod config;
pub mod dataset;
pub mod embedding;
pub mod eval;
pub mod mlp;
pub mod preprocess;
pub mod train;

pub use config::{ConfigError, PipelineConfig};
pub use dataset::{
    dataset_summary, load_split, parse_ground_truth, Dataset, DatasetError, GroundTruthRecord, LabelSchema, Split,
    Task,
};
pub use embedding::{
    embed, read_feature_cache, stub_backend, write_feature_cache, EmbeddingBackend, EmbeddingError, FeatureCache,
    FeatureVector, Normalization, StubBackend, FEATURE_DIM,
};
pub use eval::{accuracy, evaluation_report, roc_auc, EvalError, EvalReport, RocCurve, TaskScores};
pub use mlp::{
    adam_step, backward, cross_entropy_loss, forward, init_params, softmax, Activation, AdamHyper, AdamState,
    ForwardTrace, Gradients, MlpError, MlpParams,
};
pub use preprocess::{
    apply_transform, build_training_pool, resize_bilinear, select_augmentation_subset, AugmentParams,
    ImageTensor, PreprocessError, TransformKind,
};
pub use train::{load_checkpoint, save_checkpoint, train_task, CheckpointError, TrainConfig, TrainError, TrainingLog};

#[cfg(feature = "onnx")]
pub use embedding::{pretrained_backend, PretrainedBackend};
