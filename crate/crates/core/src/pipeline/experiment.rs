use std::collections::BTreeSet;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::dataset::{ImageSource, Split};
use super::metrics::{confusion_matrix, operating_point, tau_sweep, ConfusionMatrix, ImagePredictions, OperatingPoint};
use super::predict::{class_mapping, predict_image, SuperpixelPrediction};
use super::prepare::{prepare_image, Modality, PreparedDataset, PreparedImage};
use crate::classifier::{fit, train_with_grid_search, FitParams, GridSearchResult, MulticlassModel};
use crate::confidence::{ConfidenceMetric, ConfidenceThreshold};
use crate::error::{Error, Result};

/// Prepares every image of `source`; `with_rgb` also extracts RGB features.
pub fn prepare_dataset(source: &dyn ImageSource, config: &PipelineConfig, with_rgb: bool) -> Result<PreparedDataset> {
    config.validate()?;
    let calib = source.calibration()?;
    let classes = source.classes().to_vec();
    let infos = source.images();
    let prepared: Vec<PreparedImage> = infos
        .into_par_iter()
        .enumerate()
        .map(|(k, info)| {
            let (raw, gt) = source.load(k)?;
            let img = prepare_image(info, &raw, &calib, Some(&gt), classes.len(), config, with_rgb)?;
            info!("prepared {} ({} superpixels)", img.info.id, img.segmentation.len());
            Ok(img)
        })
        .collect::<Result<_>>()?;
    let (train, test) = prepared.into_iter().partition(|im| im.info.split == Split::Train);
    Ok(PreparedDataset { classes, train, test })
}

/// Features and labels of all non-mixed, labelled superpixels.
pub fn training_samples(images: &[PreparedImage], modality: Modality, min_purity: f64) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for im in images {
        for (id, fv) in &im.features(modality)?.vectors {
            if im.is_mixed(*id, min_purity) {
                continue;
            }
            if let Some(t) = im.truth[*id] {
                x.push(fv.0.clone());
                y.push(t.class);
            }
        }
    }
    Ok((x, y))
}

/// Grid search plus final fit on the training split.
pub fn train_model(ds: &PreparedDataset, modality: Modality, config: &PipelineConfig) -> Result<(MulticlassModel, GridSearchResult)> {
    let (x, y) = training_samples(&ds.train, modality, config.min_purity)?;
    if x.is_empty() {
        return Err(Error::InvalidParameter("training split has no usable superpixels".into()));
    }
    info!("training {} model on {} superpixels", modality.name(), x.len());
    train_with_grid_search(&x, &y, &ds.classes, &config.svm)
}

/// Predictions for every image of a split.
pub fn predict_images(
    model: &MulticlassModel,
    classes: &[String],
    images: &[PreparedImage],
    modality: Modality,
    thr: &ConfidenceThreshold,
) -> Result<Vec<ImagePredictions>> {
    let mapping = class_mapping(model, classes)?;
    images
        .iter()
        .map(|im| {
            Ok(ImagePredictions {
                id: im.info.id.clone(),
                subject: im.info.subject.clone(),
                predictions: predict_image(model, &mapping, im, modality, thr)?,
                truth_tags: im.truth_tags.clone(),
                degenerate: im.features(modality)?.degenerate.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSummary {
    pub id: String,
    pub subject: String,
    pub superpixels: usize,
    pub degenerate: usize,
    pub acc_spx_base: Option<f64>,
    pub acc_spx_tau: Option<f64>,
    pub tags_base: Vec<String>,
    pub tags_tau: Vec<String>,
    pub truth_tags: Vec<String>,
    pub abstained: bool,
}

/// Share of an organ's test superpixels that fall at or below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganLowConfidence {
    pub organ: String,
    pub superpixels: usize,
    pub low_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub modality: Modality,
    pub classes: Vec<String>,
    pub metric: ConfidenceMetric,
    pub tau: f64,
    pub model_c: f64,
    pub model_gamma: f64,
    /// No threshold.
    pub base: OperatingPoint,
    /// Configured metric and threshold.
    pub selected: OperatingPoint,
    /// Every metric over the threshold grid.
    pub sweep: Vec<OperatingPoint>,
    pub confusion_base: ConfusionMatrix,
    pub confusion_selected: ConfusionMatrix,
    pub low_confidence: Vec<OrganLowConfidence>,
    pub predicted_superpixels: usize,
    pub degenerate_superpixels: usize,
    pub images: Vec<ImageSummary>,
}

fn names(classes: &[String], ids: &BTreeSet<usize>) -> Vec<String> {
    ids.iter().map(|&k| classes[k].clone()).collect()
}

/// Low-confidence share per organ among labelled predictions.
pub fn low_confidence_by_organ<'a>(
    preds: impl IntoIterator<Item = &'a SuperpixelPrediction> + Clone,
    classes: &[String],
    thr: &ConfidenceThreshold,
) -> Vec<OrganLowConfidence> {
    classes
        .iter()
        .enumerate()
        .map(|(k, organ)| {
            let of_organ: Vec<_> = preds.clone().into_iter().filter(|p| p.truth == Some(k)).collect();
            let low = of_organ.iter().filter(|p| !p.passes(Some(thr))).count();
            OrganLowConfidence {
                organ: organ.clone(),
                superpixels: of_organ.len(),
                low_confidence: (!of_organ.is_empty()).then(|| low as f64 / of_organ.len() as f64),
            }
        })
        .collect()
}

pub fn build_report(
    model: &MulticlassModel,
    classes: &[String],
    modality: Modality,
    results: &[ImagePredictions],
    config: &PipelineConfig,
) -> EvaluationReport {
    let thr = config.threshold();
    let all = || results.iter().flat_map(|r| &r.predictions);
    let mut sweep = vec![operating_point(results, None)];
    for metric in ConfidenceMetric::ALL {
        sweep.extend(tau_sweep(results, &config.tau_grid, metric));
    }
    let images = results
        .iter()
        .map(|r| {
            let tags_tau = super::metrics::tag_image(&r.predictions, Some(&thr));
            ImageSummary {
                id: r.id.clone(),
                subject: r.subject.clone(),
                superpixels: r.predictions.len() + r.degenerate,
                degenerate: r.degenerate,
                acc_spx_base: super::metrics::acc_spx(&r.predictions, None),
                acc_spx_tau: super::metrics::acc_spx(&r.predictions, Some(&thr)),
                tags_base: names(classes, &super::metrics::tag_image(&r.predictions, None).tags),
                tags_tau: names(classes, &tags_tau.tags),
                truth_tags: names(classes, &r.truth_tags),
                abstained: tags_tau.abstained,
            }
        })
        .collect();
    EvaluationReport {
        modality,
        classes: classes.to_vec(),
        metric: config.metric,
        tau: config.tau,
        model_c: model.c,
        model_gamma: model.gamma,
        base: operating_point(results, None),
        selected: operating_point(results, Some(&thr)),
        sweep,
        confusion_base: confusion_matrix(all(), classes.len(), None),
        confusion_selected: confusion_matrix(all(), classes.len(), Some(&thr)),
        low_confidence: low_confidence_by_organ(all(), classes, &thr),
        predicted_superpixels: all().count(),
        degenerate_superpixels: results.iter().map(|r| r.degenerate).sum(),
        images,
    }
}

/// Predicts the test split and assembles the report.
pub fn evaluate_model(
    ds: &PreparedDataset,
    model: &MulticlassModel,
    modality: Modality,
    config: &PipelineConfig,
) -> Result<(EvaluationReport, Vec<ImagePredictions>)> {
    if ds.test.is_empty() {
        return Err(Error::InvalidParameter("test split is empty".into()));
    }
    let results = predict_images(model, &ds.classes, &ds.test, modality, &config.threshold())?;
    Ok((build_report(model, &ds.classes, modality, &results, config), results))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutRow {
    pub organ: String,
    /// Low-confidence share among test superpixels of the held-out organ.
    pub lc_ex: Option<f64>,
    /// Low-confidence share among test superpixels of the trained organs.
    pub lc_in: Option<f64>,
    pub n_ex: usize,
    pub n_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaveOneOutReport {
    pub modality: Modality,
    pub metric: ConfidenceMetric,
    pub tau: f64,
    pub c: f64,
    pub gamma: f64,
    pub rows: Vec<LeaveOneOutRow>,
    pub mean_lc_ex: Option<f64>,
    pub mean_lc_in: Option<f64>,
}

fn low_share(preds: &[&SuperpixelPrediction], thr: &ConfidenceThreshold) -> Option<f64> {
    (!preds.is_empty()).then(|| preds.iter().filter(|p| !p.passes(Some(thr))).count() as f64 / preds.len() as f64)
}

/// For each organ, retrains without it at fixed `(c, gamma)` and measures how
/// often test superpixels fall at or below `thr`, separately for the held-out
/// organ and for the remaining ones.
pub fn leave_one_organ_out(
    ds: &PreparedDataset,
    modality: Modality,
    c: f64,
    gamma: f64,
    thr: &ConfidenceThreshold,
    config: &PipelineConfig,
) -> Result<LeaveOneOutReport> {
    let j = ds.classes.len();
    if j < 3 {
        return Err(Error::InvalidParameter(format!("leave-one-organ-out needs at least 3 classes, got {j}")));
    }
    let (x, y) = training_samples(&ds.train, modality, config.min_purity)?;
    let mut rows = Vec::with_capacity(j);
    for held in 0..j {
        let kept: Vec<usize> = (0..j).filter(|&k| k != held).collect();
        let remap = |k: usize| kept.iter().position(|&v| v == k);
        let (sx, sy): (Vec<Vec<f64>>, Vec<usize>) = x
            .iter()
            .zip(&y)
            .filter_map(|(f, &l)| remap(l).map(|m| (f.clone(), m)))
            .unzip();
        let names: Vec<String> = kept.iter().map(|&k| ds.classes[k].clone()).collect();
        let mut params = FitParams::new(c, gamma);
        params.tol = config.svm.tol;
        params.seed = config.svm.seed;
        let model = fit(&sx, &sy, &names, &params)?;
        let results = predict_images(&model, &ds.classes, &ds.test, modality, thr)?;
        let preds: Vec<&SuperpixelPrediction> = results.iter().flat_map(|r| &r.predictions).filter(|p| p.truth.is_some()).collect();
        let (ex, inc): (Vec<_>, Vec<_>) = preds.into_iter().partition(|p| p.truth == Some(held));
        info!("left out {}: {} held-out and {} included superpixels", ds.classes[held], ex.len(), inc.len());
        rows.push(LeaveOneOutRow {
            organ: ds.classes[held].clone(),
            lc_ex: low_share(&ex, thr),
            lc_in: low_share(&inc, thr),
            n_ex: ex.len(),
            n_in: inc.len(),
        });
    }
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(LeaveOneOutReport {
        modality,
        metric: thr.metric,
        tau: thr.tau,
        c,
        gamma,
        mean_lc_ex: mean(rows.iter().filter_map(|r| r.lc_ex).collect()),
        mean_lc_in: mean(rows.iter().filter_map(|r| r.lc_in).collect()),
        rows,
    })
}
