//! Superpixel segmentation by linear spectral clustering.

mod connectivity;
mod lsc;

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{io, ChannelStack, PixelMask};

pub use lsc::{lsc_segment, LscParams};

/// A dense partition of the image into 4-connected regions `0..N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelSegmentation {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    regions: Vec<Vec<usize>>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl SuperpixelSegmentation {
    /// Builds the segmentation from a row-major label map whose ids must be
    /// dense in `0..N`.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for a {width}x{height} image",
                labels.len()
            )));
        }
        let n = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut regions = vec![Vec::new(); n];
        for (i, &l) in labels.iter().enumerate() {
            regions[l as usize].push(i);
        }
        if let Some(empty) = regions.iter().position(Vec::is_empty) {
            return Err(Error::InvalidParameter(format!("superpixel id {empty} is unused")));
        }
        let mut adjacency = vec![BTreeSet::new(); n];
        for y in 0..height {
            for x in 0..width {
                let a = labels[y * width + x] as usize;
                if x + 1 < width {
                    let b = labels[y * width + x + 1] as usize;
                    if a != b {
                        adjacency[a].insert(b);
                        adjacency[b].insert(a);
                    }
                }
                if y + 1 < height {
                    let b = labels[(y + 1) * width + x] as usize;
                    if a != b {
                        adjacency[a].insert(b);
                        adjacency[b].insert(a);
                    }
                }
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            regions,
            adjacency,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of superpixels.
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Linear pixel indices (`y * width + x`) of region `id`, ascending.
    pub fn region(&self, id: usize) -> &[usize] {
        &self.regions[id]
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.regions
    }

    pub fn neighbors(&self, id: usize) -> &BTreeSet<usize> {
        &self.adjacency[id]
    }

    /// True if every region is a single 4-connected component.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.labels.len()];
        let mut stack = Vec::new();
        self.regions.iter().enumerate().all(|(id, region)| {
            let start = region[0];
            seen[start] = true;
            stack.push(start);
            let mut reached = 0;
            while let Some(p) = stack.pop() {
                reached += 1;
                let (x, y) = (p % self.width, p / self.width);
                let mut visit = |q: usize| {
                    if !seen[q] && self.labels[q] as usize == id {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 {
                    visit(p - 1);
                }
                if x + 1 < self.width {
                    visit(p + 1);
                }
                if y > 0 {
                    visit(p - self.width);
                }
                if y + 1 < self.height {
                    visit(p + self.width);
                }
            }
            reached == region.len()
        })
    }

    /// True where a pixel's right or lower neighbour lies in another region.
    pub fn boundary_map(&self) -> Vec<bool> {
        let (w, h) = (self.width, self.height);
        (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (x + 1 < w && self.labels[i] != self.labels[i + 1])
                    || (y + 1 < h && self.labels[i] != self.labels[i + w])
            })
            .collect()
    }

    /// Writes the label map as a 16-bit PNG.
    pub fn write_label_png(&self, path: &Path) -> Result<()> {
        io::write_label_map_png(path, self.width, self.height, &self.labels)
    }

    /// Writes `rgb` (values in `[0, 1]`) with region boundaries drawn in yellow.
    pub fn write_boundary_overlay(&self, rgb: &ChannelStack, path: &Path) -> Result<()> {
        if rgb.width() != self.width || rgb.height() != self.height || rgb.channels() < 3 {
            return Err(Error::DimensionMismatch("overlay needs a matching 3-channel image".into()));
        }
        let boundary = self.boundary_map();
        let mut bytes = Vec::with_capacity(self.labels.len() * 3);
        for (i, &edge) in boundary.iter().enumerate() {
            let (x, y) = (i % self.width, i / self.width);
            if edge {
                bytes.extend_from_slice(&[255, 230, 0]);
            } else {
                for k in 0..3 {
                    bytes.push((rgb.channel(k)[[y, x]].clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
        io::write_rgb_png(path, self.width, self.height, &bytes)
    }
}

/// Unmasked pixel count of every region.
pub fn region_stats(seg: &SuperpixelSegmentation, mask: &PixelMask) -> Result<Vec<usize>> {
    mask.check_dims(seg.width(), seg.height())?;
    let w = seg.width();
    Ok(seg
        .regions()
        .iter()
        .map(|r| r.iter().filter(|&&p| !mask.is_masked(p % w, p / w)).count())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadrants() -> SuperpixelSegmentation {
        let (w, h) = (8, 6);
        let labels = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                (x >= 4) as u32 + 2 * (y >= 3) as u32
            })
            .collect();
        SuperpixelSegmentation::from_labels(w, h, labels).unwrap()
    }

    #[test]
    fn regions_and_adjacency() {
        let s = quadrants();
        assert_eq!(s.len(), 4);
        assert!(s.regions().iter().all(|r| r.len() == 12));
        assert_eq!(s.neighbors(0).iter().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert!(s.is_connected());
    }

    #[test]
    fn sparse_ids_rejected() {
        assert!(SuperpixelSegmentation::from_labels(2, 1, vec![0, 2]).is_err());
    }

    #[test]
    fn disconnected_region_detected() {
        let s = SuperpixelSegmentation::from_labels(3, 1, vec![0, 1, 0]).unwrap();
        assert!(!s.is_connected());
    }

    #[test]
    fn region_stats_counts_unmasked() {
        let s = quadrants();
        assert_eq!(region_stats(&s, &PixelMask::empty(8, 6)).unwrap(), vec![12; 4]);
        let mut full = PixelMask::empty(8, 6);
        for y in 0..6 {
            for x in 0..8 {
                full.set(x, y, true);
            }
        }
        assert_eq!(region_stats(&s, &full).unwrap(), vec![0; 4]);

        // A disc centred on region 3.
        let mut disc = PixelMask::empty(8, 6);
        let mut hits = [0usize; 4];
        for y in 0..6 {
            for x in 0..8 {
                if (x as f64 - 5.5).powi(2) + (y as f64 - 4.0).powi(2) <= 2.3 {
                    disc.set(x, y, true);
                    hits[s.label(x, y)] += 1;
                }
            }
        }
        let counts = region_stats(&s, &disc).unwrap();
        for k in 0..4 {
            assert_eq!(counts[k], 12 - hits[k]);
        }
        assert!(hits[3] > 0);
    }

    #[test]
    fn mask_size_must_match() {
        assert!(region_stats(&quadrants(), &PixelMask::empty(3, 3)).is_err());
    }
}
