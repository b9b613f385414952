//! Per-superpixel confidence from the dispersion of class probabilities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassProbabilities;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceMetric {
    /// Gini coefficient of the sorted probabilities.
    Gc,
    /// Posterior probability certainty index, one minus normalised entropy.
    Ppci,
    /// Largest class probability.
    Max,
}

impl ConfidenceMetric {
    pub const ALL: [ConfidenceMetric; 3] = [ConfidenceMetric::Gc, ConfidenceMetric::Ppci, ConfidenceMetric::Max];

    pub fn name(self) -> &'static str {
        match self {
            ConfidenceMetric::Gc => "gc",
            ConfidenceMetric::Ppci => "ppci",
            ConfidenceMetric::Max => "max",
        }
    }

    pub fn score(self, p: &ClassProbabilities) -> Result<f64> {
        match self {
            ConfidenceMetric::Gc => gini_coefficient(p),
            ConfidenceMetric::Ppci => ppci(p),
            ConfidenceMetric::Max => Ok(max_confidence(p)),
        }
    }
}

impl fmt::Display for ConfidenceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConfidenceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gc" | "gini" => Ok(ConfidenceMetric::Gc),
            "ppci" => Ok(ConfidenceMetric::Ppci),
            "max" => Ok(ConfidenceMetric::Max),
            other => Err(Error::InvalidParameter(format!("unknown confidence metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceScore {
    pub metric: ConfidenceMetric,
    pub value: f64,
}

/// A prediction is confident when its score is strictly above `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceThreshold {
    pub tau: f64,
    pub metric: ConfidenceMetric,
}

impl ConfidenceThreshold {
    pub fn new(tau: f64, metric: ConfidenceMetric) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidParameter(format!("threshold {tau} outside [0, 1]")));
        }
        Ok(Self { tau, metric })
    }

    pub fn accepts(&self, score: f64) -> bool {
        score > self.tau
    }
}

fn class_count(p: &ClassProbabilities) -> Result<usize> {
    if p.len() < 2 {
        return Err(Error::InvalidParameter(format!("confidence needs at least 2 classes, got {}", p.len())));
    }
    Ok(p.len())
}

/// Shannon entropy divided by `ln J`; zero probabilities contribute nothing.
pub fn normalized_entropy(p: &ClassProbabilities) -> Result<f64> {
    let j = class_count(p)?;
    let h: f64 = p
        .as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    Ok((h / (j as f64).ln()).clamp(0.0, 1.0))
}

pub fn ppci(p: &ClassProbabilities) -> Result<f64> {
    Ok(1.0 - normalized_entropy(p)?)
}

/// Gini coefficient from the Lorentz curve of the descending-sorted
/// probabilities, `(2 * area - 1) * J / (J - 1)`, so that the uniform
/// distribution scores 0 and a one-hot distribution scores 1.
pub fn gini_coefficient(p: &ClassProbabilities) -> Result<f64> {
    let j = class_count(p)?;
    let mut sorted = p.as_slice().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let width = 1.0 / j as f64;
    let mut area = 0.0;
    let mut cum = 0.0;
    for v in sorted {
        let next = cum + v;
        area += 0.5 * (cum + next) * width;
        cum = next;
    }
    let raw = 2.0 * area - 1.0;
    Ok((raw * j as f64 / (j as f64 - 1.0)).clamp(0.0, 1.0))
}

pub fn max_confidence(p: &ClassProbabilities) -> f64 {
    p.as_slice().iter().copied().fold(0.0, f64::max)
}

pub fn confidence_score(p: &ClassProbabilities, metric: ConfidenceMetric) -> Result<ConfidenceScore> {
    Ok(ConfidenceScore {
        metric,
        value: metric.score(p)?,
    })
}

pub fn is_confident(p: &ClassProbabilities, thr: &ConfidenceThreshold) -> Result<bool> {
    Ok(thr.accepts(thr.metric.score(p)?))
}
