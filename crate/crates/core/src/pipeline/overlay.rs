use std::path::Path;

use super::predict::SuperpixelPrediction;
use super::prepare::PreparedImage;
use crate::confidence::ConfidenceThreshold;
use crate::error::Result;
use crate::imaging::io::{class_color, write_rgb_png};

/// Colour of masked pixels and superpixels without a prediction.
pub const NO_PREDICTION_COLOR: [u8; 3] = [0, 0, 0];
/// Colour of low-confidence superpixels in the classification map.
pub const LOW_CONFIDENCE_COLOR: [u8; 3] = [128, 128, 128];
/// Sentinel for masked or low-confidence pixels in the confidence map.
pub const CONFIDENCE_SENTINEL: [u8; 3] = [255, 0, 255];

fn paint(image: &PreparedImage, colour_of: impl Fn(Option<&SuperpixelPrediction>) -> [u8; 3], preds: &[SuperpixelPrediction]) -> Vec<u8> {
    let mut by_region: Vec<Option<&SuperpixelPrediction>> = vec![None; image.segmentation.len()];
    for p in preds {
        by_region[p.superpixel] = Some(p);
    }
    let (w, h) = (image.width(), image.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let c = if image.mask.is_masked(x, y) {
                None
            } else {
                Some(colour_of(by_region[image.segmentation.label(x, y)]))
            };
            out.extend_from_slice(&c.unwrap_or(NO_PREDICTION_COLOR));
        }
    }
    out
}

/// Class colours for confident superpixels, grey for the rest.
pub fn classification_map(image: &PreparedImage, preds: &[SuperpixelPrediction], thr: Option<&ConfidenceThreshold>) -> Vec<u8> {
    paint(
        image,
        |p| match p {
            None => NO_PREDICTION_COLOR,
            Some(p) if p.passes(thr) => class_color(p.predicted),
            Some(_) => LOW_CONFIDENCE_COLOR,
        },
        preds,
    )
}

/// Score as grey level; masked, missing and low-confidence regions use the sentinel.
pub fn confidence_map(image: &PreparedImage, preds: &[SuperpixelPrediction], thr: &ConfidenceThreshold) -> Vec<u8> {
    let mut out = paint(
        image,
        |p| match p {
            Some(p) if p.passes(Some(thr)) => {
                let g = (p.scores.get(thr.metric).clamp(0.0, 1.0) * 255.0).round() as u8;
                [g, g, g]
            }
            _ => CONFIDENCE_SENTINEL,
        },
        preds,
    );
    for (k, px) in out.chunks_mut(3).enumerate() {
        if image.mask.as_array().as_slice().is_some_and(|m| m[k]) {
            px.copy_from_slice(&CONFIDENCE_SENTINEL);
        }
    }
    out
}

/// Writes `<id>_class.png` and `<id>_confidence.png` into `dir`.
pub fn write_overlays(dir: &Path, image: &PreparedImage, preds: &[SuperpixelPrediction], thr: &ConfidenceThreshold) -> Result<()> {
    let (w, h) = (image.width(), image.height());
    let id = &image.info.id;
    write_rgb_png(&dir.join(format!("{id}_class.png")), w, h, &classification_map(image, preds, Some(thr)))?;
    write_rgb_png(&dir.join(format!("{id}_confidence.png")), w, h, &confidence_map(image, preds, thr))
}
