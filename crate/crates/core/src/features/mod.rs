//! Per-superpixel texture and reflectance features.
//!
//! For each channel the feature vector holds one normalised riu2 histogram per
//! `(R, P)` pair followed by that channel's entry of the L2-normalised average
//! spectrum. With the default pairs this is `(10 + 18 + 26 + 1)` values per
//! channel: 440 for eight bands and 165 for RGB.

mod lbp;
mod spectrum;

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{ChannelStack, PixelMask};
use crate::superpixel::SuperpixelSegmentation;

pub use lbp::{lbp_code_map, lbp_histogram, riu2_code, riu2_from_samples, LbpConfig, INVALID_CODE};
pub use spectrum::average_spectrum;

/// Superpixels with fewer valid LBP pixels than this, for any `(R, P)`, are dropped.
pub const MIN_VALID_PIXELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Feature length for `channels` bands: `(sum(P + 2) + 1) * channels`.
pub fn feature_len(channels: usize, cfg: &LbpConfig) -> usize {
    (cfg.histogram_len() + 1) * channels
}

/// Features of every usable superpixel in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    /// `(superpixel id, features)` in ascending id order.
    pub vectors: Vec<(usize, FeatureVector)>,
    /// Superpixels without enough valid pixels.
    pub degenerate: Vec<usize>,
}

/// LBP code maps for every channel and `(R, P)` pair, indexed `[channel][pair]`.
pub fn code_maps(sr: &ChannelStack, mask: &PixelMask, cfg: &LbpConfig) -> Result<Vec<Vec<Array2<u8>>>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..sr.channels())
        .flat_map(|c| (0..cfg.pairs.len()).map(move |k| (c, k)))
        .collect();
    let maps: Vec<Array2<u8>> = jobs
        .par_iter()
        .map(|&(c, k)| {
            let (r, p) = cfg.pairs[k];
            lbp_code_map(sr.channel(c), r, p, mask)
        })
        .collect::<Result<_>>()?;
    let mut it = maps.into_iter();
    Ok((0..sr.channels())
        .map(|_| it.by_ref().take(cfg.pairs.len()).collect())
        .collect())
}

/// Builds the feature vector of every superpixel with at least
/// [`MIN_VALID_PIXELS`] valid LBP pixels and one unmasked pixel.
pub fn assemble_features(
    sr: &ChannelStack,
    seg: &SuperpixelSegmentation,
    mask: &PixelMask,
    cfg: &LbpConfig,
) -> Result<ImageFeatures> {
    if seg.width() != sr.width() || seg.height() != sr.height() {
        return Err(Error::DimensionMismatch("segmentation and stack differ in size".into()));
    }
    mask.check_dims(sr.width(), sr.height())?;
    let maps = code_maps(sr, mask, cfg)?;
    assemble_from_maps(sr, seg, mask, cfg, &maps)
}

/// Like [`assemble_features`] with precomputed code maps (for a subset of
/// channels, pass the matching subset of maps).
pub fn assemble_from_maps(
    sr: &ChannelStack,
    seg: &SuperpixelSegmentation,
    mask: &PixelMask,
    cfg: &LbpConfig,
    maps: &[Vec<Array2<u8>>],
) -> Result<ImageFeatures> {
    if maps.len() != sr.channels() || maps.iter().any(|m| m.len() != cfg.pairs.len()) {
        return Err(Error::DimensionMismatch("code maps do not match stack / LBP config".into()));
    }
    let results: Vec<(usize, Option<FeatureVector>)> = (0..seg.len())
        .into_par_iter()
        .map(|id| (id, superpixel_features(sr, seg.region(id), mask, cfg, maps)))
        .collect();
    let mut out = ImageFeatures {
        vectors: Vec::new(),
        degenerate: Vec::new(),
    };
    for (id, f) in results {
        match f {
            Some(v) => out.vectors.push((id, v)),
            None => out.degenerate.push(id),
        }
    }
    Ok(out)
}

fn superpixel_features(
    sr: &ChannelStack,
    region: &[usize],
    mask: &PixelMask,
    cfg: &LbpConfig,
    maps: &[Vec<Array2<u8>>],
) -> Option<FeatureVector> {
    let spectrum = average_spectrum(sr, region, mask).ok()?;
    let mut values = Vec::with_capacity(feature_len(sr.channels(), cfg));
    for (c, channel_maps) in maps.iter().enumerate() {
        for (&(_, p), codes) in cfg.pairs.iter().zip(channel_maps) {
            let (counts, valid) = lbp::lbp_counts(codes, region, p);
            if valid < MIN_VALID_PIXELS {
                return None;
            }
            values.extend(counts.into_iter().map(|n| n as f64 / valid as f64));
        }
        values.push(spectrum[c]);
    }
    Some(FeatureVector(values))
}

/// One row of the feature dump.
pub struct FeatureRow<'a> {
    pub image_id: &'a str,
    pub superpixel: usize,
    pub features: &'a FeatureVector,
    pub label: Option<&'a str>,
}

/// Writes `image_id, spx_id, f0..f{n-1}, gt_label` rows.
pub fn write_feature_csv<'a>(path: &Path, rows: impl IntoIterator<Item = FeatureRow<'a>>) -> Result<()> {
    let mut rows = rows.into_iter().peekable();
    let n = rows.peek().map_or(0, |r| r.features.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    let mut header = vec!["image_id".to_string(), "spx_id".to_string()];
    header.extend((0..n).map(|i| format!("f{i}")));
    header.push("gt_label".to_string());
    writer.write_record(&header).map_err(|e| Error::format(path, e))?;
    for row in rows {
        if row.features.len() != n {
            return Err(Error::DimensionMismatch("feature rows differ in length".into()));
        }
        let mut record = vec![row.image_id.to_string(), row.superpixel.to_string()];
        record.extend(row.features.0.iter().map(|v| v.to_string()));
        record.push(row.label.unwrap_or("").to_string());
        writer.write_record(&record).map_err(|e| Error::format(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{mi_bands, simulate_rgb_default};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> ChannelStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ChannelStack::filled(w, h, mi_bands(), 0.0);
        for k in 0..8 {
            for v in s.channel_mut(k).iter_mut() {
                *v = 0.2 + 0.05 * k as f64 + rng.random_range(0.0..0.1);
            }
        }
        s
    }

    fn blocks(w: usize, h: usize, size: usize) -> SuperpixelSegmentation {
        let nx = w.div_ceil(size);
        let labels = (0..w * h)
            .map(|p| ((p / w) / size * nx + (p % w) / size) as u32)
            .collect();
        SuperpixelSegmentation::from_labels(w, h, labels).unwrap()
    }

    #[test]
    fn histogram_lengths_sum_to_54() {
        assert_eq!(LbpConfig::default().histogram_len(), 54);
        assert_eq!(feature_len(8, &LbpConfig::default()), 440);
        assert_eq!(feature_len(3, &LbpConfig::default()), 165);
    }

    #[test]
    fn vector_layout_and_normalisation() {
        let sr = textured(40, 40, 1);
        let seg = blocks(40, 40, 20);
        let f = assemble_features(&sr, &seg, &PixelMask::empty(40, 40), &LbpConfig::default()).unwrap();
        assert_eq!(f.vectors.len(), 4);
        assert!(f.degenerate.is_empty());
        for (_, v) in &f.vectors {
            assert_eq!(v.len(), 440);
            let mut as_norm = 0.0;
            for c in 0..8 {
                let block = &v.0[c * 55..(c + 1) * 55];
                for (start, len) in [(0, 10), (10, 18), (28, 26)] {
                    let s: f64 = block[start..start + len].iter().sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
                as_norm += block[54] * block[54];
            }
            assert!((as_norm - 1.0).abs() < 1e-12);
        }
        let rgb = simulate_rgb_default(&sr).unwrap();
        let f = assemble_features(&rgb, &seg, &PixelMask::empty(40, 40), &LbpConfig::default()).unwrap();
        assert!(f.vectors.iter().all(|(_, v)| v.len() == 165));
    }

    #[test]
    fn small_regions_are_reported_degenerate() {
        let sr = textured(30, 30, 2);
        // A 4x4 block in the corner has no pixel with a full R=3 neighbourhood.
        let labels = (0..900)
            .map(|p| if p % 30 < 4 && p / 30 < 4 { 1 } else { 0 })
            .collect();
        let seg = SuperpixelSegmentation::from_labels(30, 30, labels).unwrap();
        let f = assemble_features(&sr, &seg, &PixelMask::empty(30, 30), &LbpConfig::default()).unwrap();
        assert_eq!(f.degenerate, vec![1]);
        assert_eq!(f.vectors.len(), 1);
    }

    #[test]
    fn power_of_two_scaling_leaves_features_unchanged() {
        let sr = textured(40, 40, 3);
        let seg = blocks(40, 40, 20);
        let m = PixelMask::empty(40, 40);
        let cfg = LbpConfig::default();
        let base = assemble_features(&sr, &seg, &m, &cfg).unwrap();
        for scale in [0.25, 0.5, 2.0, 8.0] {
            let scaled = sr.map_channels(|_, c| c.mapv(|v| v * scale));
            let f = assemble_features(&scaled, &seg, &m, &cfg).unwrap();
            for ((_, a), (_, b)) in base.vectors.iter().zip(&f.vectors) {
                for (x, y) in a.0.iter().zip(&b.0) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let v = FeatureVector(vec![0.5, 0.25]);
        write_feature_csv(
            &path,
            [
                FeatureRow { image_id: "img0", superpixel: 3, features: &v, label: Some("liver") },
                FeatureRow { image_id: "img0", superpixel: 4, features: &v, label: None },
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "image_id,spx_id,f0,f1,gt_label");
        assert_eq!(lines[1], "img0,3,0.5,0.25,liver");
        assert_eq!(lines[2], "img0,4,0.5,0.25,");
    }
}
