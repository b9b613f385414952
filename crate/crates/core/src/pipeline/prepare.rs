use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::dataset::{ImageInfo, Split};
use crate::error::{Error, Result};
use crate::features::{assemble_from_maps, code_maps, ImageFeatures};
use crate::imaging::{
    anisotropic_diffusion_masked, mask_specular, normalize_reflectance, rgb_indices_for, simulate_rgb, CalibrationPair,
    ChannelStack, GroundTruth, PixelMask,
};
use crate::superpixel::{lsc_segment, SuperpixelSegmentation};

/// Which channels feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    /// Every band of the stack.
    Mi,
    /// The three bands used as R, G and B.
    Rgb,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Mi => "mi",
            Modality::Rgb => "rgb",
        }
    }
}

/// Majority label of a superpixel and the fraction of its labelled pixels
/// that carry it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelTruth {
    pub class: usize,
    pub purity: f64,
}

/// Reflectance-normalised, masked and diffused image with its simulated RGB view.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub reflectance: ChannelStack,
    pub mask: PixelMask,
    pub rgb_indices: [usize; 3],
    pub rgb: ChannelStack,
}

/// Everything downstream stages need from one image.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub info: ImageInfo,
    pub mask: PixelMask,
    pub segmentation: SuperpixelSegmentation,
    /// Per superpixel; `None` when the region has no labelled pixel.
    pub truth: Vec<Option<SuperpixelTruth>>,
    /// Classes covering at least the configured fraction of labelled pixels.
    pub truth_tags: BTreeSet<usize>,
    pub mi: ImageFeatures,
    pub rgb: Option<ImageFeatures>,
    /// Interleaved 8-bit preview of the simulated RGB image.
    pub preview: Vec<u8>,
}

impl PreparedImage {
    pub fn width(&self) -> usize {
        self.segmentation.width()
    }

    pub fn height(&self) -> usize {
        self.segmentation.height()
    }

    pub fn features(&self, modality: Modality) -> Result<&ImageFeatures> {
        match modality {
            Modality::Mi => Ok(&self.mi),
            Modality::Rgb => self
                .rgb
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("image {:?} was prepared without RGB features", self.info.id))),
        }
    }

    /// Whether superpixel `id` is too impure to serve as a training sample.
    pub fn is_mixed(&self, id: usize, min_purity: f64) -> bool {
        self.truth[id].is_none_or(|t| t.purity < min_purity)
    }
}

/// Normalise, mask specular highlights, then diffuse every channel with the
/// masked pixels held fixed.
pub fn preprocess(raw: &ChannelStack, calib: &CalibrationPair, config: &PipelineConfig) -> Result<Preprocessed> {
    let sr = normalize_reflectance(raw, calib)?;
    let rgb_indices = rgb_indices_for(&sr, config.rgb_wavelengths)?;
    let mask = mask_specular(&sr, rgb_indices, config.v_threshold)?;
    let diffused = sr
        .channel_data()
        .iter()
        .map(|c| anisotropic_diffusion_masked(c, &mask, &config.diffusion))
        .collect::<Result<Vec<_>>>()?;
    let reflectance = ChannelStack::new(sr.bands().to_vec(), diffused)?;
    let rgb = simulate_rgb(&reflectance, rgb_indices)?;
    Ok(Preprocessed {
        reflectance,
        mask,
        rgb_indices,
        rgb,
    })
}

/// Majority label and purity of every region.
pub fn superpixel_truth(seg: &SuperpixelSegmentation, gt: &GroundTruth, n_classes: usize) -> Vec<Option<SuperpixelTruth>> {
    seg.regions()
        .iter()
        .map(|region| {
            let mut counts = vec![0usize; n_classes];
            for &p in region {
                if let Some(l) = gt.label_at(p) {
                    if (l as usize) < n_classes {
                        counts[l as usize] += 1;
                    }
                }
            }
            let total: usize = counts.iter().sum();
            if total == 0 {
                return None;
            }
            let mut best = 0;
            for (k, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = k;
                }
            }
            Some(SuperpixelTruth {
                class: best,
                purity: counts[best] as f64 / total as f64,
            })
        })
        .collect()
}

/// Classes covering at least `min_fraction` of the labelled pixels.
pub fn truth_tags(gt: &GroundTruth, n_classes: usize, min_fraction: f64) -> BTreeSet<usize> {
    let counts = gt.class_counts(n_classes);
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| total > 0 && c > 0 && c as f64 >= min_fraction * total as f64)
        .map(|(k, _)| k)
        .collect()
}

fn preview_bytes(rgb: &ChannelStack) -> Vec<u8> {
    let (w, h) = (rgb.width(), rgb.height());
    let mut out = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push((rgb.channel(c)[[y, x]].clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out
}

/// Runs preprocessing, segmentation on the simulated RGB image and feature
/// extraction. RGB features share the segmentation and mask of the MI run.
pub fn prepare_image(
    info: ImageInfo,
    raw: &ChannelStack,
    calib: &CalibrationPair,
    gt: Option<&GroundTruth>,
    n_classes: usize,
    config: &PipelineConfig,
    with_rgb: bool,
) -> Result<PreparedImage> {
    if let Some(g) = gt {
        if g.width() != raw.width() || g.height() != raw.height() {
            return Err(Error::DimensionMismatch(format!("image {:?}: ground truth and stack differ in size", info.id)));
        }
    }
    let pre = preprocess(raw, calib, config)?;
    let segmentation = lsc_segment(&pre.rgb, &config.lsc)?;
    let maps = code_maps(&pre.reflectance, &pre.mask, &config.lbp)?;
    let mi = assemble_from_maps(&pre.reflectance, &segmentation, &pre.mask, &config.lbp, &maps)?;
    let rgb = if with_rgb {
        let rgb_maps: Vec<_> = pre.rgb_indices.iter().map(|&k| maps[k].clone()).collect();
        Some(assemble_from_maps(&pre.rgb, &segmentation, &pre.mask, &config.lbp, &rgb_maps)?)
    } else {
        None
    };
    let (truth, tags) = match gt {
        Some(g) => (
            superpixel_truth(&segmentation, g, n_classes),
            truth_tags(g, n_classes, config.min_tag_fraction),
        ),
        None => (vec![None; segmentation.len()], BTreeSet::new()),
    };
    Ok(PreparedImage {
        info,
        mask: pre.mask,
        segmentation,
        truth,
        truth_tags: tags,
        mi,
        rgb,
        preview: preview_bytes(&pre.rgb),
    })
}

/// Prepared images of one dataset, split by role.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub classes: Vec<String>,
    pub train: Vec<PreparedImage>,
    pub test: Vec<PreparedImage>,
}

impl PreparedDataset {
    pub fn split(&self, split: Split) -> &[PreparedImage] {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{generate_phantom, PhantomSpec};
    use ndarray::Array2;

    fn info() -> ImageInfo {
        ImageInfo {
            id: "x".into(),
            subject: "s".into(),
            split: Split::Test,
        }
    }

    #[test]
    fn truth_is_majority_with_purity() {
        let labels: Vec<u32> = (0..16).map(|p| if p % 4 < 2 { 0 } else { 1 }).collect();
        let seg = SuperpixelSegmentation::from_labels(4, 4, labels).unwrap();
        let gt = GroundTruth::new(Array2::from_shape_fn((4, 4), |(y, x)| match (x, y) {
            (0, _) => Some(2),
            (1, 0) => None,
            (1, _) => Some(1),
            _ => Some(0),
        }));
        let t = superpixel_truth(&seg, &gt, 3);
        assert_eq!(t[0].unwrap().class, 2);
        assert!((t[0].unwrap().purity - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(t[1].unwrap().class, 0);
        assert_eq!(t[1].unwrap().purity, 1.0);
    }

    #[test]
    fn tags_need_minimum_coverage() {
        let gt = GroundTruth::new(Array2::from_shape_fn((10, 10), |(y, x)| {
            if y == 0 && x == 0 {
                Some(1)
            } else if y < 5 {
                Some(0)
            } else {
                Some(2)
            }
        }));
        assert_eq!(truth_tags(&gt, 3, 0.02), BTreeSet::from([0, 2]));
        assert_eq!(truth_tags(&gt, 3, 0.0), BTreeSet::from([0, 1, 2]));
    }

    #[test]
    fn prepared_phantom_has_features_for_most_regions() {
        let spec = PhantomSpec {
            width: 128,
            height: 96,
            seed: 2,
            ..Default::default()
        };
        let p = generate_phantom(&spec).unwrap();
        let mut config = PipelineConfig::default();
        config.lsc.avg_size = 24;
        let img = prepare_image(info(), &p.raw, &p.calibration, Some(&p.ground_truth), 6, &config, true).unwrap();
        let n = img.segmentation.len();
        assert!(n >= 12, "{n} regions");
        assert_eq!(img.mi.vectors.len() + img.mi.degenerate.len(), n);
        assert!(img.mi.vectors.len() * 10 >= n * 8);
        assert!(img.mi.vectors.iter().all(|(_, v)| v.len() == 440));
        let rgb = img.rgb.as_ref().unwrap();
        assert_eq!(rgb.vectors.len(), img.mi.vectors.len());
        assert!(rgb.vectors.iter().all(|(_, v)| v.len() == 165));
        assert!(img.truth.iter().all(|t| t.is_some()));
        assert!(!img.truth_tags.is_empty());
        assert_eq!(img.preview.len(), 128 * 96 * 3);
    }

    #[test]
    fn rgb_features_reuse_mi_maps() {
        let spec = PhantomSpec {
            width: 64,
            height: 64,
            seed: 3,
            ..Default::default()
        };
        let p = generate_phantom(&spec).unwrap();
        let mut config = PipelineConfig::default();
        config.lsc.avg_size = 16;
        let img = prepare_image(info(), &p.raw, &p.calibration, None, 6, &config, true).unwrap();
        // Channel k of the RGB vector equals band rgb_indices[k] of the MI vector
        // up to the spectral normalisation term.
        let block = 55;
        let idx = rgb_indices_for(&normalize_reflectance(&p.raw, &p.calibration).unwrap(), config.rgb_wavelengths).unwrap();
        for ((_, mi), (_, rgb)) in img.mi.vectors.iter().zip(&img.rgb.as_ref().unwrap().vectors) {
            for (k, &band) in idx.iter().enumerate() {
                assert_eq!(&rgb.0[k * block..k * block + 54], &mi.0[band * block..band * block + 54]);
            }
        }
        assert!(img.truth.iter().all(|t| t.is_none()));
    }
}
