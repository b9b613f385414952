use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Band layout of the eight-filter laparoscopic camera: centre wavelengths in nm.
pub const MI_WAVELENGTHS: [f64; 8] = [470.0, 480.0, 511.0, 560.0, 580.0, 600.0, 660.0, 700.0];
/// Full width at half maximum of each band, nm.
pub const MI_FWHM: [f64; 8] = [20.0, 25.0, 20.0, 20.0, 20.0, 20.0, 20.0, 20.0];
/// Bands used to simulate an RGB camera, in R, G, B order.
pub const RGB_WAVELENGTHS: [f64; 3] = [700.0, 560.0, 470.0];

/// Wavelength matching tolerance, nm.
pub(crate) const WAVELENGTH_TOL: f64 = 1e-6;

/// Metadata for a single band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub wavelength: f64,
    pub fwhm: f64,
}

/// An H x W x N_C image. Every channel is an `(height, width)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    width: usize,
    height: usize,
    bands: Vec<Band>,
    data: Vec<Array2<f64>>,
}

impl ChannelStack {
    pub fn new(bands: Vec<Band>, data: Vec<Array2<f64>>) -> Result<Self> {
        if bands.len() != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} bands but {} channel grids",
                bands.len(),
                data.len()
            )));
        }
        let Some(first) = data.first() else {
            return Err(Error::InvalidParameter("stack needs at least one channel".into()));
        };
        let (height, width) = first.dim();
        if let Some((k, _)) = data.iter().enumerate().find(|(_, c)| c.dim() != (height, width)) {
            return Err(Error::DimensionMismatch(format!(
                "channel {k} is {:?}, channel 0 is {:?}",
                data[k].dim(),
                (height, width)
            )));
        }
        Ok(Self {
            width,
            height,
            bands,
            data,
        })
    }

    /// Builds a stack where every channel is filled with `value`.
    pub fn filled(width: usize, height: usize, bands: Vec<Band>, value: f64) -> Self {
        let data = bands
            .iter()
            .map(|_| Array2::from_elem((height, width), value))
            .collect();
        Self {
            width,
            height,
            bands,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.wavelength).collect()
    }

    pub fn channel(&self, k: usize) -> &Array2<f64> {
        &self.data[k]
    }

    pub fn channel_mut(&mut self, k: usize) -> &mut Array2<f64> {
        &mut self.data[k]
    }

    pub fn channel_data(&self) -> &[Array2<f64>] {
        &self.data
    }

    pub fn into_channels(self) -> Vec<Array2<f64>> {
        self.data
    }

    /// Index of the channel whose centre wavelength is `nm`.
    pub fn band_index(&self, nm: f64) -> Option<usize> {
        self.bands
            .iter()
            .position(|b| (b.wavelength - nm).abs() < WAVELENGTH_TOL)
    }

    pub fn same_geometry(&self, other: &ChannelStack) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bands.len() == other.bands.len()
            && self
                .bands
                .iter()
                .zip(&other.bands)
                .all(|(a, b)| (a.wavelength - b.wavelength).abs() < WAVELENGTH_TOL)
    }

    /// Spectrum at pixel `(x, y)` across all channels.
    pub fn pixel(&self, x: usize, y: usize) -> Vec<f64> {
        self.data.iter().map(|c| c[[y, x]]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    /// New stack made of the given channels, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.channels()) {
            return Err(Error::InvalidParameter(format!(
                "channel index {bad} out of range for a {}-channel stack",
                self.channels()
            )));
        }
        Ok(Self {
            width: self.width,
            height: self.height,
            bands: indices.iter().map(|&i| self.bands[i]).collect(),
            data: indices.iter().map(|&i| self.data[i].clone()).collect(),
        })
    }

    pub(crate) fn map_channels(&self, mut f: impl FnMut(usize, &Array2<f64>) -> Array2<f64>) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bands: self.bands.clone(),
            data: self.data.iter().enumerate().map(|(k, c)| f(k, c)).collect(),
        }
    }
}

/// Bands of the eight-filter camera.
pub fn mi_bands() -> Vec<Band> {
    MI_WAVELENGTHS
        .iter()
        .zip(MI_FWHM)
        .map(|(&wavelength, fwhm)| Band { wavelength, fwhm })
        .collect()
}

/// Dark (`D`) and white (`W`) reference stacks for one camera setup.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPair {
    pub dark: ChannelStack,
    pub white: ChannelStack,
}

impl CalibrationPair {
    pub fn new(dark: ChannelStack, white: ChannelStack) -> Result<Self> {
        if !dark.same_geometry(&white) {
            return Err(Error::DimensionMismatch(
                "dark and white references differ in size or bands".into(),
            ));
        }
        Ok(Self { dark, white })
    }

    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            dark: self.dark.select(indices)?,
            white: self.white.select(indices)?,
        })
    }
}

/// Boolean pixel mask; `true` marks an excluded pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    bits: Array2<bool>,
}

impl PixelMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            bits: Array2::from_elem((height, width), false),
        }
    }

    pub fn from_array(bits: Array2<bool>) -> Self {
        Self { bits }
    }

    pub fn width(&self) -> usize {
        self.bits.ncols()
    }

    pub fn height(&self) -> usize {
        self.bits.nrows()
    }

    #[inline]
    pub fn is_masked(&self, x: usize, y: usize) -> bool {
        self.bits[[y, x]]
    }

    pub fn set(&mut self, x: usize, y: usize, masked: bool) {
        self.bits[[y, x]] = masked;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn as_array(&self) -> &Array2<bool> {
        &self.bits
    }

    /// Masked pixels as linear indices `y * width + x`.
    pub fn indices(&self) -> Vec<usize> {
        let w = self.width();
        self.bits
            .indexed_iter()
            .filter(|(_, &b)| b)
            .map(|((y, x), _)| y * w + x)
            .collect()
    }

    pub fn is_subset_of(&self, other: &PixelMask) -> bool {
        self.bits.iter().zip(other.bits.iter()).all(|(&a, &b)| !a || b)
    }

    pub(crate) fn check_dims(&self, width: usize, height: usize) -> Result<()> {
        if self.width() != width || self.height() != height {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, image is {width}x{height}",
                self.width(),
                self.height()
            )));
        }
        Ok(())
    }
}

/// Per-pixel class annotation. `None` is unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    labels: Array2<Option<u8>>,
}

impl GroundTruth {
    pub fn new(labels: Array2<Option<u8>>) -> Self {
        Self { labels }
    }

    pub fn width(&self) -> usize {
        self.labels.ncols()
    }

    pub fn height(&self) -> usize {
        self.labels.nrows()
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> Option<u8> {
        self.labels[[y, x]]
    }

    #[inline]
    pub fn label_at(&self, index: usize) -> Option<u8> {
        let w = self.width();
        self.labels[[index / w, index % w]]
    }

    pub fn as_array(&self) -> &Array2<Option<u8>> {
        &self.labels
    }

    /// Pixel count per class id (length `num_classes`).
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &l in self.labels.iter().flatten() {
            if (l as usize) < num_classes {
                counts[l as usize] += 1;
            }
        }
        counts
    }
}
