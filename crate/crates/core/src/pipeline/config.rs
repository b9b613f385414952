use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::GridConfig;
use crate::confidence::{ConfidenceMetric, ConfidenceThreshold};
use crate::error::{Error, Result};
use crate::features::LbpConfig;
use crate::imaging::{DiffusionParams, DEFAULT_V_THRESHOLD, RGB_WAVELENGTHS};
use crate::superpixel::LscParams;

/// Default thresholds swept in evaluation reports.
pub const DEFAULT_TAU_GRID: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Every tunable of the pipeline. All fields have defaults, so an empty TOML
/// file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lsc: LscParams,
    pub lbp: LbpConfig,
    pub diffusion: DiffusionParams,
    /// Pixels whose HSV value (max of R, G, B reflectance) exceeds this are masked.
    pub v_threshold: f64,
    /// Band centres (nm) used as R, G and B.
    pub rgb_wavelengths: [f64; 3],
    pub svm: GridConfig,
    pub tau_grid: Vec<f64>,
    pub metric: ConfidenceMetric,
    /// Threshold used for tagging, confusion matrices and the organ study.
    pub tau: f64,
    /// Superpixels whose majority label covers less than this fraction are "mixed".
    pub min_purity: f64,
    /// A class is a ground-truth tag of an image when it covers at least this
    /// fraction of the labelled pixels.
    pub min_tag_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lsc: LscParams::default(),
            lbp: LbpConfig::default(),
            diffusion: DiffusionParams::default(),
            v_threshold: DEFAULT_V_THRESHOLD,
            rgb_wavelengths: RGB_WAVELENGTHS,
            svm: GridConfig::default(),
            tau_grid: DEFAULT_TAU_GRID.to_vec(),
            metric: ConfidenceMetric::Gc,
            tau: 0.9,
            min_purity: 0.6,
            min_tag_fraction: 0.02,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.lbp.validate()?;
        self.diffusion.validate()?;
        self.svm.validate()?;
        if self.lsc.avg_size < 2 {
            return Err(Error::InvalidParameter(format!("LSC size {} too small", self.lsc.avg_size)));
        }
        if !(self.lsc.compactness > 0.0 && self.lsc.compactness <= 1.0) {
            return Err(Error::InvalidParameter(format!("compactness {} outside (0, 1]", self.lsc.compactness)));
        }
        if !(self.v_threshold > 0.0 && self.v_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!("v_threshold {} outside (0, 1]", self.v_threshold)));
        }
        for &t in self.tau_grid.iter().chain([&self.tau]) {
            ConfidenceThreshold::new(t, self.metric)?;
        }
        if !(0.0..=1.0).contains(&self.min_purity) || !(0.0..=1.0).contains(&self.min_tag_fraction) {
            return Err(Error::InvalidParameter("fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> ConfidenceThreshold {
        ConfidenceThreshold {
            tau: self.tau,
            metric: self.metric,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidParameter(m) => Error::InvalidParameter(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
