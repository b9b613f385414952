//! End-to-end orchestration: dataset handling, per-image classification with
//! confidence, tagging, evaluation metrics and the leave-one-organ-out study.

mod config;
mod dataset;
mod experiment;
mod metrics;
mod overlay;
mod predict;
mod prepare;
mod report;

pub use config::{PipelineConfig, DEFAULT_TAU_GRID};
pub use dataset::{
    write_synthetic_dataset, DatasetManifest, ImageEntry, ImageInfo, ImageSource, PlannedImage, Split, SynthSpec, SyntheticSource,
    DATASET_FORMAT, MANIFEST_FILE,
};
pub use experiment::{
    build_report, evaluate_model, leave_one_organ_out, low_confidence_by_organ, predict_images, prepare_dataset, train_model,
    training_samples, EvaluationReport, ImageSummary, LeaveOneOutReport, LeaveOneOutRow, OrganLowConfidence,
};
pub use metrics::{
    acc_spx, acc_tag, confusion_matrix, operating_point, percentile, summarize, tag_image, tau_sweep, ConfusionMatrix, ImagePredictions,
    ImageTags, OperatingPoint, Summary, TagAccuracy,
};
pub use overlay::{classification_map, confidence_map, write_overlays, CONFIDENCE_SENTINEL, LOW_CONFIDENCE_COLOR, NO_PREDICTION_COLOR};
pub use predict::{class_mapping, classify_image, predict_image, ImageClassification, Scores, SuperpixelPrediction};
pub use prepare::{
    prepare_image, preprocess, superpixel_truth, truth_tags, Modality, PreparedDataset, PreparedImage, Preprocessed, SuperpixelTruth,
};
pub use report::{write_confusion_csv, write_cv_csv, write_loo_csv, write_report, write_sweep_csv, ReportFile, ReportHeader};
