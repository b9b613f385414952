use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::dataset::ImageInfo;
use super::prepare::{prepare_image, Modality, PreparedImage};
use crate::classifier::{ClassProbabilities, MulticlassModel};
use crate::confidence::{gini_coefficient, max_confidence, ppci, ConfidenceMetric, ConfidenceThreshold};
use crate::error::{Error, Result};
use crate::imaging::{CalibrationPair, ChannelStack, GroundTruth};

/// All three confidence scores of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub gc: f64,
    pub ppci: f64,
    pub max: f64,
}

impl Scores {
    pub fn of(p: &ClassProbabilities) -> Result<Self> {
        Ok(Self {
            gc: gini_coefficient(p)?,
            ppci: ppci(p)?,
            max: max_confidence(p),
        })
    }

    pub fn get(&self, metric: ConfidenceMetric) -> f64 {
        match metric {
            ConfidenceMetric::Gc => self.gc,
            ConfidenceMetric::Ppci => self.ppci,
            ConfidenceMetric::Max => self.max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelPrediction {
    pub superpixel: usize,
    /// Dataset class id of the most probable model class.
    pub predicted: usize,
    /// Probabilities in the model's class order.
    pub probabilities: ClassProbabilities,
    pub scores: Scores,
    /// Whether the score passed the threshold used at prediction time.
    pub confident: bool,
    /// Dataset class id of the majority ground-truth label.
    pub truth: Option<usize>,
    pub purity: Option<f64>,
}

impl SuperpixelPrediction {
    /// Whether the prediction passes `thr`; `None` accepts everything.
    pub fn passes(&self, thr: Option<&ConfidenceThreshold>) -> bool {
        thr.is_none_or(|t| t.accepts(self.scores.get(t.metric)))
    }

    pub fn is_correct(&self) -> Option<bool> {
        self.truth.map(|t| t == self.predicted)
    }
}

/// Dataset class id of every model class, matched by name.
pub fn class_mapping(model: &MulticlassModel, classes: &[String]) -> Result<Vec<usize>> {
    model
        .classes
        .iter()
        .map(|name| {
            classes
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidParameter(format!("model class {name:?} is not in the dataset")))
        })
        .collect()
}

/// Predicts every non-degenerate superpixel of a prepared image.
pub fn predict_image(
    model: &MulticlassModel,
    mapping: &[usize],
    image: &PreparedImage,
    modality: Modality,
    thr: &ConfidenceThreshold,
) -> Result<Vec<SuperpixelPrediction>> {
    let features = image.features(modality)?;
    features
        .vectors
        .par_iter()
        .map(|(id, fv)| {
            let probabilities = model.predict_proba(fv.as_slice())?;
            let scores = Scores::of(&probabilities)?;
            let truth = image.truth[*id];
            Ok(SuperpixelPrediction {
                superpixel: *id,
                predicted: mapping[probabilities.argmax()],
                confident: thr.accepts(scores.get(thr.metric)),
                probabilities,
                scores,
                truth: truth.map(|t| t.class),
                purity: truth.map(|t| t.purity),
            })
        })
        .collect()
}

/// Predictions for one image together with the intermediate products.
#[derive(Debug, Clone)]
pub struct ImageClassification {
    pub image: PreparedImage,
    pub predictions: Vec<SuperpixelPrediction>,
}

/// Full per-image chain: normalise, mask, diffuse, segment, extract features,
/// classify and score confidence.
pub fn classify_image(
    info: ImageInfo,
    raw: &ChannelStack,
    calib: &CalibrationPair,
    gt: Option<&GroundTruth>,
    model: &MulticlassModel,
    classes: &[String],
    config: &PipelineConfig,
    modality: Modality,
) -> Result<ImageClassification> {
    let mapping = class_mapping(model, classes)?;
    let image = prepare_image(info, raw, calib, gt, classes.len(), config, modality == Modality::Rgb)?;
    let predictions = predict_image(model, &mapping, &image, modality, &config.threshold())?;
    Ok(ImageClassification { image, predictions })
}
