//! Synthetic labelled multispectral scenes used in place of recorded data.
//!
//! A phantom is a Voronoi partition of the image plane. Each cell belongs to
//! one tissue class, whose reflectance is the class mean spectrum modulated by
//! a class-specific band-limited texture. The scene is then lit (global gain
//! plus vignetting), converted to raw counts through a dark/white calibration
//! pair, corrupted with Gaussian read noise and optionally given saturated
//! specular discs.

use ndarray::Array2;
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::stack::{mi_bands, Band, CalibrationPair, ChannelStack, GroundTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureModel {
    /// Standard deviation (pixels) of the Gaussian that band-limits the noise.
    pub correlation_length: f64,
    /// Relative reflectance modulation (standard deviation of the multiplier).
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    pub name: String,
    /// Mean reflectance per band.
    pub spectrum: Vec<f64>,
    pub texture: TextureModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub bands: Vec<Band>,
    pub classes: Vec<ClassModel>,
    /// Number of Voronoi sites, inclusive range.
    pub sites: (usize, usize),
    /// Number of distinct classes in one image, inclusive range.
    pub classes_per_image: (usize, usize),
    /// Peak displacement (pixels) applied to region boundaries.
    pub boundary_warp: f64,
    /// Standard deviation of additive read noise, in unit sensor counts.
    pub noise_sigma: f64,
    /// Relative per-band, per-image perturbation of class spectra.
    pub spectral_jitter: f64,
    /// Range of the global illumination gain.
    pub gain: (f64, f64),
    /// Relative illumination fall-off at the image corners.
    pub vignetting: f64,
    /// Number of saturated specular discs.
    pub specular_discs: usize,
    pub specular_radius: (f64, f64),
    pub dark_level: f64,
    pub white_level: f64,
    /// Optics fall-off baked into the white reference.
    pub flat_field_falloff: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            bands: mi_bands(),
            classes: default_organs(),
            sites: (4, 8),
            classes_per_image: (2, 4),
            boundary_warp: 12.0,
            noise_sigma: 0.004,
            spectral_jitter: 0.03,
            gain: (0.6, 1.0),
            vignetting: 0.3,
            specular_discs: 4,
            specular_radius: (3.0, 8.0),
            dark_level: 0.02,
            white_level: 0.9,
            flat_field_falloff: 0.15,
            seed: 0,
        }
    }
}

/// The six abdominal tissues with synthetic spectra over the eight MI bands
/// (470, 480, 511, 560, 580, 600, 660, 700 nm).
///
/// Liver and spleen share their 470/560/700 nm reflectance and texture, so a
/// camera that only sees those three bands cannot tell them apart; they differ
/// at 580 and 600 nm.
pub fn default_organs() -> Vec<ClassModel> {
    let class = |name: &str, spectrum: [f64; 8], correlation_length: f64, amplitude: f64| ClassModel {
        name: name.to_string(),
        spectrum: spectrum.to_vec(),
        texture: TextureModel {
            correlation_length,
            amplitude,
        },
    };
    vec![
        class("liver", [0.08, 0.09, 0.10, 0.12, 0.13, 0.20, 0.30, 0.34], 2.0, 0.10),
        class("gallbladder", [0.15, 0.17, 0.22, 0.30, 0.28, 0.26, 0.30, 0.32], 6.0, 0.05),
        class("spleen", [0.08, 0.09, 0.11, 0.12, 0.18, 0.27, 0.31, 0.34], 2.0, 0.10),
        class("diaphragm", [0.30, 0.31, 0.33, 0.34, 0.38, 0.46, 0.52, 0.55], 1.0, 0.12),
        class("intestine", [0.22, 0.22, 0.21, 0.20, 0.24, 0.40, 0.52, 0.58], 4.0, 0.20),
        class("abdominal_wall", [0.36, 0.35, 0.32, 0.28, 0.30, 0.38, 0.50, 0.60], 1.5, 0.06),
    ]
}

/// Output of [`generate_phantom`].
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub raw: ChannelStack,
    pub calibration: CalibrationPair,
    pub ground_truth: GroundTruth,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let j = self.classes.len();
        if j < 2 {
            return Err(Error::InvalidParameter(format!("phantom needs at least 2 classes, got {j}")));
        }
        if j > 255 {
            return Err(Error::InvalidParameter("at most 255 classes".into()));
        }
        if self.width == 0 || self.height == 0 || self.bands.is_empty() {
            return Err(Error::InvalidParameter("phantom has an empty dimension".into()));
        }
        if let Some(c) = self.classes.iter().find(|c| c.spectrum.len() != self.bands.len()) {
            return Err(Error::DimensionMismatch(format!(
                "class {:?} has {} spectrum values for {} bands",
                c.name,
                c.spectrum.len(),
                self.bands.len()
            )));
        }
        let (lo, hi) = self.classes_per_image;
        if lo == 0 || lo > hi || hi > j {
            return Err(Error::InvalidParameter(format!(
                "classes_per_image {:?} invalid for {j} classes",
                self.classes_per_image
            )));
        }
        if self.sites.0 < hi || self.sites.0 > self.sites.1 {
            return Err(Error::InvalidParameter(format!(
                "sites {:?} must cover classes_per_image {:?}",
                self.sites, self.classes_per_image
            )));
        }
        if !(self.white_level > self.dark_level) || self.flat_field_falloff >= 1.0 {
            return Err(Error::InvalidParameter("white level must exceed dark level".into()));
        }
        Ok(())
    }

    /// Dark and white references; they depend on the optics only, not on the seed.
    pub fn calibration(&self) -> CalibrationPair {
        let (w, h) = (self.width, self.height);
        let dark = ChannelStack::filled(w, h, self.bands.clone(), self.dark_level);
        let falloff = radial_profile(w, h, self.flat_field_falloff);
        let white_grid = falloff.mapv(|f| self.dark_level + (self.white_level - self.dark_level) * f);
        let white = ChannelStack::new(
            self.bands.clone(),
            vec![white_grid; self.bands.len()],
        )
        .expect("bands and grids have equal length");
        CalibrationPair { dark, white }
    }
}

/// `1 - falloff * r^2` with `r` the distance from the centre normalised to 1 at the corners.
fn radial_profile(w: usize, h: usize, falloff: f64) -> Array2<f64> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let r2max = (cx * cx + cy * cy).max(1.0);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        1.0 - falloff * (dx * dx + dy * dy) / r2max
    })
}

/// Generates one labelled raw image together with its calibration pair.
/// The output is a pure function of `spec` (including its seed).
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width, spec.height);
    let nc = spec.bands.len();

    // Layout.
    let j = spec.classes.len();
    let n_present = rng.random_range(spec.classes_per_image.0..=spec.classes_per_image.1);
    let mut order: Vec<usize> = (0..j).collect();
    order.shuffle(&mut rng);
    let present = &order[..n_present];
    let n_sites = rng.random_range(spec.sites.0..=spec.sites.1);
    let sites: Vec<(f64, f64, usize)> = (0..n_sites)
        .map(|s| {
            let class = if s < n_present { present[s] } else { present[rng.random_range(0..n_present)] };
            (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64), class)
        })
        .collect();
    let warp_len = (w.min(h) as f64 / 8.0).max(1.0);
    let warp_x = smooth_field(w, h, warp_len, &mut rng);
    let warp_y = smooth_field(w, h, warp_len, &mut rng);
    let labels = Array2::from_shape_fn((h, w), |(y, x)| {
        let px = x as f64 + spec.boundary_warp * warp_x[[y, x]];
        let py = y as f64 + spec.boundary_warp * warp_y[[y, x]];
        let mut best = (f64::INFINITY, 0usize);
        for &(sx, sy, class) in &sites {
            let d = (px - sx).powi(2) + (py - sy).powi(2);
            if d < best.0 {
                best = (d, class);
            }
        }
        best.1
    });

    // Per-image class spectra and textures, generated in class order so the
    // stream of random draws does not depend on the layout.
    let jitter = Normal::new(0.0, spec.spectral_jitter.max(0.0)).expect("finite sigma");
    let spectra: Vec<Vec<f64>> = spec
        .classes
        .iter()
        .map(|c| {
            c.spectrum
                .iter()
                .map(|&v| v * (1.0 + jitter.sample(&mut rng)))
                .collect()
        })
        .collect();
    let textures: Vec<Option<Array2<f64>>> = spec
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let seed = rng.random::<u64>();
            (present.contains(&k) && c.texture.amplitude > 0.0).then(|| {
                let mut trng = ChaCha8Rng::seed_from_u64(seed);
                smooth_field(w, h, c.texture.correlation_length, &mut trng)
            })
        })
        .collect();

    // Illumination.
    let gain = if spec.gain.1 > spec.gain.0 {
        rng.random_range(spec.gain.0..=spec.gain.1)
    } else {
        spec.gain.0
    };
    let light = radial_profile(w, h, spec.vignetting).mapv(|v| v * gain);

    // Specular discs.
    let discs: Vec<(f64, f64, f64)> = (0..spec.specular_discs)
        .map(|_| {
            let r = if spec.specular_radius.1 > spec.specular_radius.0 {
                rng.random_range(spec.specular_radius.0..spec.specular_radius.1)
            } else {
                spec.specular_radius.0
            };
            (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64), r)
        })
        .collect();
    let specular = Array2::from_shape_fn((h, w), |(y, x)| {
        discs
            .iter()
            .any(|&(cx, cy, r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    });

    let calibration = spec.calibration();
    let mut channels = Vec::with_capacity(nc);
    for band in 0..nc {
        let dark = calibration.dark.channel(band);
        let white = calibration.white.channel(band);
        let mut raw = Array2::<f64>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let class = labels[[y, x]];
                let texture = textures[class]
                    .as_ref()
                    .map_or(0.0, |t| spec.classes[class].texture.amplitude * t[[y, x]]);
                let sr = spectra[class][band] * (1.0 + texture) * light[[y, x]];
                let (d, wv) = (dark[[y, x]], white[[y, x]]);
                let mut v = d + sr * (wv - d);
                if spec.noise_sigma > 0.0 {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v += spec.noise_sigma * n;
                }
                raw[[y, x]] = if specular[[y, x]] { 1.0 } else { v.clamp(0.0, 1.0) };
            }
        }
        channels.push(raw);
    }
    let raw = ChannelStack::new(spec.bands.clone(), channels)?;
    let ground_truth = GroundTruth::new(labels.mapv(|c| Some(c as u8)));
    Ok(Phantom {
        raw,
        calibration,
        ground_truth,
    })
}

/// Band-limited Gaussian noise: white noise blurred with a Gaussian of standard
/// deviation `sigma`, rescaled to zero mean and unit variance.
pub fn smooth_field(w: usize, h: usize, sigma: f64, rng: &mut impl Rng) -> Array2<f64> {
    let white = Array2::from_shape_fn((h, w), |_| StandardNormal.sample(rng));
    let mut field = gaussian_blur(&white, sigma);
    let n = field.len() as f64;
    let mean = field.sum() / n;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    field.mapv_inplace(|v| (v - mean) / sd);
    field
}

/// Separable Gaussian blur with mirrored borders.
pub fn gaussian_blur(grid: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (h, w) = grid.dim();
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let period = 2 * n;
        let m = i.rem_euclid(period.max(1));
        (if m < n { m } else { period - 1 - m }) as usize
    };
    let mut tmp = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            tmp[[y, x]] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * grid[[y, mirror(x as isize + k as isize - radius, w)]])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            out[[y, x]] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[[mirror(y as isize + k as isize - radius, h), x]])
                .sum();
        }
    }
    out
}
