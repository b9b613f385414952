use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::{debug, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coupling::{pairwise_couple, ClassProbabilities};
use super::kernel::{distance_matrix, squared_distance};
use super::platt::{platt_fit, SigmoidCalibration};
use super::smo::{check_labels, solve_dual, BinarySvmModel, SmoParams, DEFAULT_TOLERANCE};
use super::standardize::Standardizer;
use crate::error::{Error, Result};

/// Format tag written into every persisted model.
pub const MODEL_FORMAT: &str = "spectag-model/1";

/// Folds used to produce out-of-sample decision values for calibration.
pub const CALIBRATION_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    pub calibration_folds: usize,
    pub seed: u64,
}

impl FitParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            tol: DEFAULT_TOLERANCE,
            calibration_folds: CALIBRATION_FOLDS,
            seed: 0,
        }
    }

    fn smo(&self) -> SmoParams {
        SmoParams {
            c: self.c,
            gamma: self.gamma,
            tol: self.tol,
            max_iterations: None,
        }
    }
}

/// One one-against-one classifier. Positive decision values favour `pair.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub pair: (usize, usize),
    /// Indices into the model's shared support vector pool.
    pub support: Vec<usize>,
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub calibration: SigmoidCalibration,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub samples: usize,
    pub class_counts: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: Option<usize>,
    pub cv_accuracy: Option<f64>,
    pub seed: u64,
}

/// One-against-one RBF SVM with sigmoid-calibrated pairwise probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassModel {
    pub format: String,
    pub classes: Vec<String>,
    pub c: f64,
    pub gamma: f64,
    pub standardizer: Standardizer,
    /// Standardized support vectors shared by all pairs.
    pub support_vectors: Vec<Vec<f64>>,
    pub pairs: Vec<PairClassifier>,
    pub metadata: TrainingMetadata,
}

/// Unordered class pairs `(a, b)` with `a < b`, in lexicographic order.
pub fn class_pairs(j: usize) -> Vec<(usize, usize)> {
    (0..j).flat_map(|a| (a + 1..j).map(move |b| (a, b))).collect()
}

pub(crate) fn class_counts(labels: &[usize], j: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; j];
    for &l in labels {
        if l >= j {
            return Err(Error::InvalidParameter(format!("label {l} outside 0..{j}")));
        }
        counts[l] += 1;
    }
    Ok(counts)
}

/// Decision values for `targets` from a solution trained on `train`, both
/// indexing rows of the `n x n` Gram matrix `kernel`.
pub(crate) fn decisions_from_gram(kernel: &[f64], n: usize, train: &[usize], alpha: &[f64], y: &[f64], bias: f64, targets: &[usize]) -> Vec<f64> {
    let active: Vec<(usize, f64)> = alpha
        .iter()
        .zip(y)
        .zip(train)
        .filter(|((a, _), _)| **a > 0.0)
        .map(|((a, yi), &t)| (t, a * yi))
        .collect();
    targets
        .iter()
        .map(|&s| active.iter().map(|&(t, w)| w * kernel[s * n + t]).sum::<f64>() + bias)
        .collect()
}

fn sub_gram(kernel: &[f64], n: usize, idx: &[usize]) -> Vec<f64> {
    let m = idx.len();
    let mut out = vec![0.0; m * m];
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[a * m + b] = kernel[i * n + j];
        }
    }
    out
}

/// Out-of-fold decision values for one binary problem. Folds whose training
/// part holds a single class predict that class with value `+-1`.
fn cross_fitted_decisions(kernel: &[f64], n: usize, idx: &[usize], y: &[f64], params: &FitParams, seed: u64) -> Vec<f64> {
    let m = idx.len();
    let folds = params.calibration_folds.min(m).max(2);
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut dec = vec![0.0; m];
    for f in 0..folds {
        let held: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds == f).map(|(_, &t)| t).collect();
        let kept: Vec<usize> = order.iter().enumerate().filter(|(k, _)| k % folds != f).map(|(_, &t)| t).collect();
        let ky: Vec<f64> = kept.iter().map(|&t| y[t]).collect();
        let has_pos = ky.iter().any(|&v| v > 0.0);
        let has_neg = ky.iter().any(|&v| v < 0.0);
        if !(has_pos && has_neg) {
            let v = if has_pos { 1.0 } else if has_neg { -1.0 } else { 0.0 };
            held.iter().for_each(|&t| dec[t] = v);
            continue;
        }
        let global_kept: Vec<usize> = kept.iter().map(|&t| idx[t]).collect();
        let k = sub_gram(kernel, n, &global_kept);
        let sol = solve_dual(&k, &ky, params.c, params.tol, params.smo().iteration_limit(kept.len()), None);
        if !sol.converged {
            debug!("calibration fold {f}: solver stopped with violation {:e}", sol.violation);
        }
        let targets: Vec<usize> = held.iter().map(|&t| idx[t]).collect();
        let d = decisions_from_gram(kernel, n, &global_kept, &sol.alpha, &ky, sol.bias, &targets);
        for (&t, v) in held.iter().zip(d) {
            dec[t] = v;
        }
    }
    dec
}

struct TrainedPair {
    pair: (usize, usize),
    support: Vec<usize>,
    dual_coef: Vec<f64>,
    bias: f64,
    calibration: SigmoidCalibration,
}

fn train_pair(kernel: &[f64], n: usize, labels: &[usize], pair: (usize, usize), params: &FitParams, seed: u64) -> Result<TrainedPair> {
    let idx: Vec<usize> = (0..n).filter(|&t| labels[t] == pair.0 || labels[t] == pair.1).collect();
    let y: Vec<f64> = idx.iter().map(|&t| if labels[t] == pair.0 { 1.0 } else { -1.0 }).collect();
    check_labels(&y)?;
    let k = sub_gram(kernel, n, &idx);
    let smo = params.smo();
    let sol = solve_dual(&k, &y, smo.c, smo.tol, smo.iteration_limit(idx.len()), None);
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            violation: sol.violation,
        });
    }
    let dec = cross_fitted_decisions(kernel, n, &idx, &y, params, seed);
    let calibration = platt_fit(&dec, &y)?;
    let (support, dual_coef) = sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(t, &a)| (idx[t], a * y[t]))
        .unzip();
    Ok(TrainedPair {
        pair,
        support,
        dual_coef,
        bias: sol.bias,
        calibration,
    })
}

/// Trains one calibrated binary SVM per class pair on standardized features.
/// `labels` index into `classes`.
pub fn fit(features: &[Vec<f64>], labels: &[usize], classes: &[String], params: &FitParams) -> Result<MulticlassModel> {
    let j = classes.len();
    if j < 2 {
        return Err(Error::SingleClass);
    }
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows but {} labels", features.len(), labels.len())));
    }
    params.smo().validate()?;
    let counts = class_counts(labels, j)?;
    if let Some((class, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::TooFewSamples { class, count, required: 2 });
    }
    let standardizer = Standardizer::fit(features)?;
    let z = standardizer.transform_all(features)?;
    let n = z.len();
    let dist = distance_matrix(&z);
    let kernel: Vec<f64> = dist.par_iter().map(|d| (-params.gamma * d).exp()).collect();
    drop(dist);

    let trained: Vec<TrainedPair> = class_pairs(j)
        .into_par_iter()
        .enumerate()
        .map(|(k, pair)| train_pair(&kernel, n, labels, pair, params, params.seed.wrapping_add(k as u64)))
        .collect::<Result<_>>()?;

    let mut pool: BTreeMap<usize, usize> = BTreeMap::new();
    for t in &trained {
        for &s in &t.support {
            pool.insert(s, 0);
        }
    }
    let mut support_vectors = Vec::with_capacity(pool.len());
    for (slot, (&row, v)) in pool.iter_mut().enumerate() {
        *v = slot;
        support_vectors.push(z[row].clone());
    }
    let pairs = trained
        .into_iter()
        .map(|t| PairClassifier {
            pair: t.pair,
            support: t.support.iter().map(|s| pool[s]).collect(),
            dual_coef: t.dual_coef,
            bias: t.bias,
            calibration: t.calibration,
        })
        .collect();
    Ok(MulticlassModel {
        format: MODEL_FORMAT.to_string(),
        classes: classes.to_vec(),
        c: params.c,
        gamma: params.gamma,
        standardizer,
        support_vectors,
        pairs,
        metadata: TrainingMetadata {
            samples: n,
            class_counts: counts,
            seed: params.seed,
            ..Default::default()
        },
    })
}

impl MulticlassModel {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn feature_len(&self) -> usize {
        self.standardizer.dim()
    }

    /// The binary classifier for `pairs[k]` with its support vectors materialised.
    pub fn binary_model(&self, k: usize) -> BinarySvmModel {
        let p = &self.pairs[k];
        BinarySvmModel {
            pair: p.pair,
            support_vectors: p.support.iter().map(|&s| self.support_vectors[s].clone()).collect(),
            dual_coef: p.dual_coef.clone(),
            bias: p.bias,
            gamma: self.gamma,
            c: self.c,
        }
    }

    /// Decision value of every pair classifier, in `pairs` order.
    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardizer.transform(x)?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector"));
        }
        let k: Vec<f64> = self
            .support_vectors
            .iter()
            .map(|sv| (-self.gamma * squared_distance(sv, &z)).exp())
            .collect();
        Ok(self
            .pairs
            .iter()
            .map(|p| p.support.iter().zip(&p.dual_coef).map(|(&s, a)| a * k[s]).sum::<f64>() + p.bias)
            .collect())
    }

    /// Pairwise estimates `r[(a, b)] = P(a | {a, b})`.
    pub fn pairwise_probabilities(&self, x: &[f64]) -> Result<Array2<f64>> {
        let d = self.decision_values(x)?;
        let j = self.n_classes();
        let mut r = Array2::zeros((j, j));
        for (p, dv) in self.pairs.iter().zip(d) {
            let v = p.calibration.probability(dv);
            r[(p.pair.0, p.pair.1)] = v;
            r[(p.pair.1, p.pair.0)] = 1.0 - v;
        }
        Ok(r)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<ClassProbabilities> {
        pairwise_couple(&self.pairwise_probabilities(x)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.predict_proba(x)?.argmax())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let text = serde_json::to_string(self).map_err(|e| Error::format(path, e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(MODEL_FORMAT) => {}
            Some(other) => return Err(Error::ModelFormat(other.to_string())),
            None => return Err(Error::ModelFormat("<missing>".into())),
        }
        let model: Self = serde_json::from_value(value).map_err(|e| Error::format(path, e))?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        let j = self.n_classes();
        if j < 2 {
            return Err(Error::ModelFormat("model has fewer than two classes".into()));
        }
        let mut expected = class_pairs(j);
        let mut got: Vec<(usize, usize)> = self.pairs.iter().map(|p| p.pair).collect();
        expected.sort_unstable();
        got.sort_unstable();
        if expected != got {
            return Err(Error::ModelFormat("pair classifiers do not cover every class pair once".into()));
        }
        let d = self.feature_len();
        if self.standardizer.std.len() != d || self.support_vectors.iter().any(|s| s.len() != d) {
            return Err(Error::ModelFormat("inconsistent feature dimensions".into()));
        }
        for p in &self.pairs {
            if p.support.len() != p.dual_coef.len() || p.support.iter().any(|&s| s >= self.support_vectors.len()) {
                return Err(Error::ModelFormat(format!("pair {:?} references missing support vectors", p.pair)));
            }
        }
        if self.pairs.iter().any(|p| p.calibration.a == SigmoidCalibration::FALLBACK.a && p.calibration.b == SigmoidCalibration::FALLBACK.b) {
            warn!("model contains pairs with fallback calibration");
        }
        Ok(())
    }
}
