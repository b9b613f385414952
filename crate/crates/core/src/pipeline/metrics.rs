use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use super::predict::SuperpixelPrediction;
use crate::confidence::{ConfidenceMetric, ConfidenceThreshold};

/// Predictions of one test image with the data needed for scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePredictions {
    pub id: String,
    pub subject: String,
    pub predictions: Vec<SuperpixelPrediction>,
    pub truth_tags: BTreeSet<usize>,
    /// Superpixels dropped for lack of valid pixels.
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageTags {
    pub tags: BTreeSet<usize>,
    /// No prediction passed the threshold.
    pub abstained: bool,
}

/// Set of predicted classes over the predictions passing `thr`; `None` keeps all.
pub fn tag_image<'a>(preds: impl IntoIterator<Item = &'a SuperpixelPrediction>, thr: Option<&ConfidenceThreshold>) -> ImageTags {
    let tags: BTreeSet<usize> = preds.into_iter().filter(|p| p.passes(thr)).map(|p| p.predicted).collect();
    ImageTags {
        abstained: tags.is_empty(),
        tags,
    }
}

/// Correct over total among labelled predictions passing `thr`; `None` when
/// nothing passes.
pub fn acc_spx<'a>(preds: impl IntoIterator<Item = &'a SuperpixelPrediction>, thr: Option<&ConfidenceThreshold>) -> Option<f64> {
    let (mut correct, mut total) = (0usize, 0usize);
    for p in preds.into_iter().filter(|p| p.passes(thr)) {
        if let Some(ok) = p.is_correct() {
            total += 1;
            correct += ok as usize;
        }
    }
    (total > 0).then(|| correct as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagAccuracy {
    /// Mean over scored images of `|predicted & truth| / |truth|`.
    pub mean: Option<f64>,
    /// Mean of `|predicted & truth| / |predicted|`, reported for reference.
    pub precision: Option<f64>,
    pub images: usize,
    pub abstained: usize,
    /// Images skipped because their ground-truth tag set is empty.
    pub without_truth: usize,
}

pub fn acc_tag(pairs: &[(ImageTags, BTreeSet<usize>)]) -> TagAccuracy {
    let (mut recall, mut precision) = (Vec::new(), Vec::new());
    let (mut abstained, mut without_truth) = (0, 0);
    for (pred, truth) in pairs {
        if truth.is_empty() {
            warn!("image without ground-truth tags excluded from tag accuracy");
            without_truth += 1;
            continue;
        }
        if pred.abstained {
            abstained += 1;
            continue;
        }
        let hit = pred.tags.intersection(truth).count() as f64;
        recall.push(hit / truth.len() as f64);
        precision.push(hit / pred.tags.len() as f64);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    TagAccuracy {
        mean: mean(&recall),
        precision: mean(&precision),
        images: recall.len(),
        abstained,
        without_truth,
    }
}

/// Rows are ground truth, columns predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    /// Row-normalised percentages; empty rows are all zero.
    pub percent: Vec<Vec<f64>>,
}

pub fn confusion_matrix<'a>(
    preds: impl IntoIterator<Item = &'a SuperpixelPrediction>,
    n_classes: usize,
    thr: Option<&ConfidenceThreshold>,
) -> ConfusionMatrix {
    let mut counts = vec![vec![0usize; n_classes]; n_classes];
    for p in preds.into_iter().filter(|p| p.passes(thr)) {
        if let Some(t) = p.truth {
            counts[t][p.predicted] += 1;
        }
    }
    let percent = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                .collect()
        })
        .collect();
    ConfusionMatrix { counts, percent }
}

/// Median and quartiles with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub n: usize,
}

pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (percentile(&v, 0.25), percentile(&v, 0.75));
    Some(Summary {
        median: percentile(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
        n: v.len(),
    })
}

/// Metrics of a test set at one threshold (or none, the "Base" operating point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub metric: Option<ConfidenceMetric>,
    pub tau: Option<f64>,
    /// Statistics of per-image accuracy over images with a confident superpixel.
    pub acc_spx: Option<Summary>,
    /// Accuracy over all confident superpixels of the set.
    pub pooled_acc_spx: Option<f64>,
    pub confident_fraction: f64,
    pub acc_tag: TagAccuracy,
}

pub fn operating_point(images: &[ImagePredictions], thr: Option<&ConfidenceThreshold>) -> OperatingPoint {
    let per_image: Vec<f64> = images.iter().filter_map(|im| acc_spx(&im.predictions, thr)).collect();
    let all = images.iter().flat_map(|im| &im.predictions);
    let total = all.clone().count();
    let confident = all.clone().filter(|p| p.passes(thr)).count();
    let tags: Vec<(ImageTags, BTreeSet<usize>)> = images
        .iter()
        .map(|im| (tag_image(&im.predictions, thr), im.truth_tags.clone()))
        .collect();
    OperatingPoint {
        metric: thr.map(|t| t.metric),
        tau: thr.map(|t| t.tau),
        acc_spx: summarize(&per_image),
        pooled_acc_spx: acc_spx(all, thr),
        confident_fraction: if total == 0 { 0.0 } else { confident as f64 / total as f64 },
        acc_tag: acc_tag(&tags),
    }
}

/// One operating point per `tau`.
pub fn tau_sweep(images: &[ImagePredictions], taus: &[f64], metric: ConfidenceMetric) -> Vec<OperatingPoint> {
    taus.iter()
        .map(|&tau| operating_point(images, Some(&ConfidenceThreshold { tau, metric })))
        .collect()
}
