use std::sync::Mutex;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::distance_matrix;
use super::multiclass::{class_counts, class_pairs, fit, FitParams, MulticlassModel};
use super::smo::{solve_dual, SmoParams, DEFAULT_TOLERANCE};
use super::standardize::Standardizer;
use crate::error::{Error, Result};

/// `{1e-8, 1e-7, ..., 1e1}`.
pub const DEFAULT_GAMMA_GRID: [f64; 10] = [1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1];
/// `{1e1, 1e2, ..., 1e10}`.
pub const DEFAULT_C_GRID: [f64; 10] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10];
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            gamma_grid: DEFAULT_GAMMA_GRID.to_vec(),
            c_grid: DEFAULT_C_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
            seed: 0,
            tol: DEFAULT_TOLERANCE,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 folds, got {}", self.folds)));
        }
        if self.gamma_grid.is_empty() || self.c_grid.is_empty() {
            return Err(Error::InvalidParameter("hyperparameter grids must be nonempty".into()));
        }
        if self.gamma_grid.iter().chain(&self.c_grid).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("grid values must be positive and finite".into()));
        }
        Ok(())
    }
}

/// `n` values evenly spaced in log10 between `10^lo` and `10^hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..n).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (n - 1) as f64)).collect(),
    }
}

/// Cross-validated accuracy of one `(C, gamma)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub c: f64,
    pub gamma: f64,
    /// `None` when some fold's solver hit the iteration limit at this or a
    /// smaller `C` for the same `gamma`; such cells are never selected.
    pub mean_accuracy: Option<f64>,
    /// Empty when `mean_accuracy` is `None`.
    pub fold_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
    /// One row per cell, `C` major and `gamma` minor in grid order.
    pub table: Vec<CvCell>,
}

/// Fold index of every sample. Each class is shuffled and dealt round-robin,
/// so every fold receives `floor` or `ceil` of its share.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let counts = class_counts(labels, n_classes)?;
    for (class, &count) in counts.iter().enumerate() {
        if count < folds {
            return Err(Error::Stratification(format!(
                "class {class} has {count} samples, fewer than {folds} folds"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&t| labels[t] == class).collect();
        members.shuffle(&mut rng);
        for t in members {
            assignment[t] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

/// First solver failure seen for one `gamma`: sorted `C` index, iterations
/// and KKT violation. Only ever lowered, so the final value does not depend on
/// the order in which folds run.
struct Cutoff(Mutex<(usize, usize, f64)>);

impl Cutoff {
    fn new(len: usize) -> Self {
        Self(Mutex::new((len, 0, 0.0)))
    }

    fn get(&self) -> usize {
        self.0.lock().expect("cutoff lock").0
    }

    fn lower(&self, ci: usize, iterations: usize, violation: f64) {
        let mut g = self.0.lock().expect("cutoff lock");
        if ci < g.0 {
            *g = (ci, iterations, violation);
        }
    }
}

/// Accuracy for each sorted `C` on one fold at one `gamma`, scored by
/// one-against-one majority voting. `C` values at or beyond the shared
/// cutoff are skipped; a failed solve lowers the cutoff.
#[allow(clippy::too_many_arguments)]
fn fold_accuracies(
    dist: &[f64],
    n: usize,
    labels: &[usize],
    n_classes: usize,
    fold_of: &[usize],
    fold: usize,
    gamma: f64,
    c_sorted: &[f64],
    tol: f64,
    cutoff: &Cutoff,
) -> Vec<f64> {
    let test: Vec<usize> = (0..n).filter(|&t| fold_of[t] == fold).collect();
    let train: Vec<usize> = (0..n).filter(|&t| fold_of[t] != fold).collect();
    let mut votes = vec![vec![vec![0u32; n_classes]; test.len()]; c_sorted.len()];
    let kernel_row = |s: usize, t: usize| (-gamma * dist[s * n + t]).exp();
    for (a, b) in class_pairs(n_classes) {
        if cutoff.get() == 0 {
            break;
        }
        let idx: Vec<usize> = train.iter().copied().filter(|&t| labels[t] == a || labels[t] == b).collect();
        let y: Vec<f64> = idx.iter().map(|&t| if labels[t] == a { 1.0 } else { -1.0 }).collect();
        let m = idx.len();
        let mut k = vec![0.0; m * m];
        for (p, &i) in idx.iter().enumerate() {
            for (q, &j) in idx.iter().enumerate() {
                k[p * m + q] = kernel_row(i, j);
            }
        }
        let mut cross = vec![0.0; test.len() * m];
        for (p, &s) in test.iter().enumerate() {
            for (q, &t) in idx.iter().enumerate() {
                cross[p * m + q] = kernel_row(s, t);
            }
        }
        let limit = SmoParams::new(c_sorted[0], gamma).iteration_limit(m);
        let mut warm = None;
        for (ci, &c) in c_sorted.iter().enumerate() {
            if ci >= cutoff.get() {
                break;
            }
            let sol = solve_dual(&k, &y, c, tol, limit, warm.take());
            if !sol.converged {
                debug!("gamma {gamma:e}, C {c:e}, fold {fold}, pair ({a}, {b}): stopped with violation {:e}", sol.violation);
                cutoff.lower(ci, sol.iterations, sol.violation);
                break;
            }
            for (p, row) in cross.chunks(m.max(1)).enumerate().take(test.len()) {
                let v: f64 = sol
                    .alpha
                    .iter()
                    .zip(&y)
                    .zip(row)
                    .map(|((al, yi), kv)| al * yi * kv)
                    .sum::<f64>()
                    + sol.bias;
                votes[ci][p][if v > 0.0 { a } else { b }] += 1;
            }
            warm = Some((sol.alpha, sol.gradient));
        }
    }
    votes
        .iter()
        .map(|per_c| {
            let correct = per_c
                .iter()
                .zip(&test)
                .filter(|(v, &t)| {
                    let mut best = 0;
                    for (k, &count) in v.iter().enumerate() {
                        if count > v[best] {
                            best = k;
                        }
                    }
                    best == labels[t]
                })
                .count();
            correct as f64 / test.len() as f64
        })
        .collect()
}

/// Stratified k-fold search over `(C, gamma)`.
///
/// Features are standardized once with statistics of the full set. For each
/// `gamma`, `C` runs in ascending order with warm starts; once any fold's
/// solver hits the iteration limit, that `C` and every larger one are left
/// unscored, since the final fit would fail there too. The scored cell with
/// the highest mean fold accuracy wins; ties go to the smaller `C`, then the
/// smaller `gamma`. Fails with [`Error::NotConverged`] if no cell is scored.
pub fn grid_search(features: &[Vec<f64>], labels: &[usize], n_classes: usize, config: &GridConfig) -> Result<GridSearchResult> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows but {} labels", features.len(), labels.len())));
    }
    if n_classes < 2 {
        return Err(Error::SingleClass);
    }
    let fold_of = stratified_folds(labels, n_classes, config.folds, config.seed)?;
    let z = Standardizer::fit(features)?.transform_all(features)?;
    let n = z.len();
    let dist = distance_matrix(&z);

    let mut c_order: Vec<usize> = (0..config.c_grid.len()).collect();
    c_order.sort_by(|&a, &b| config.c_grid[a].total_cmp(&config.c_grid[b]));
    let c_sorted: Vec<f64> = c_order.iter().map(|&k| config.c_grid[k]).collect();

    let cutoffs: Vec<Cutoff> = config.gamma_grid.iter().map(|_| Cutoff::new(c_sorted.len())).collect();
    let tasks: Vec<(usize, usize)> = (0..config.gamma_grid.len())
        .flat_map(|g| (0..config.folds).map(move |f| (g, f)))
        .collect();
    let results: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(g, f)| {
            fold_accuracies(&dist, n, labels, n_classes, &fold_of, f, config.gamma_grid[g], &c_sorted, config.tol, &cutoffs[g])
        })
        .collect();

    let mut table = Vec::with_capacity(config.c_grid.len() * config.gamma_grid.len());
    for (ci, &c) in config.c_grid.iter().enumerate() {
        let sorted_pos = c_order.iter().position(|&k| k == ci).unwrap();
        for (g, &gamma) in config.gamma_grid.iter().enumerate() {
            let (fold_accuracy, mean_accuracy) = if sorted_pos < cutoffs[g].get() {
                let acc: Vec<f64> = (0..config.folds).map(|f| results[g * config.folds + f][sorted_pos]).collect();
                let mean = acc.iter().sum::<f64>() / config.folds as f64;
                (acc, Some(mean))
            } else {
                (Vec::new(), None)
            };
            table.push(CvCell {
                c,
                gamma,
                mean_accuracy,
                fold_accuracy,
            });
        }
    }
    let skipped = table.iter().filter(|cell| cell.mean_accuracy.is_none()).count();
    if skipped > 0 {
        warn!("grid search: {skipped} of {} cells skipped because the solver did not converge", table.len());
    }
    let best = table
        .iter()
        .filter_map(|cell| cell.mean_accuracy.map(|acc| (cell, acc)))
        .min_by(|(a, acc_a), (b, acc_b)| acc_b.total_cmp(acc_a).then(a.c.total_cmp(&b.c)).then(a.gamma.total_cmp(&b.gamma)));
    let Some((best, accuracy)) = best else {
        let (_, iterations, violation) = cutoffs
            .iter()
            .map(|c| *c.0.lock().expect("cutoff lock"))
            .max_by(|a, b| a.2.total_cmp(&b.2))
            .expect("nonempty grid");
        return Err(Error::NotConverged { iterations, violation });
    };
    info!("grid search selected C = {:e}, gamma = {:e} (CV accuracy {:.4})", best.c, best.gamma, accuracy);
    Ok(GridSearchResult {
        c: best.c,
        gamma: best.gamma,
        accuracy,
        table,
    })
}

/// Grid search followed by a final fit at the selected cell.
pub fn train_with_grid_search(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: &[String],
    config: &GridConfig,
) -> Result<(MulticlassModel, GridSearchResult)> {
    let search = grid_search(features, labels, classes.len(), config)?;
    let mut params = FitParams::new(search.c, search.gamma);
    params.tol = config.tol;
    params.seed = config.seed;
    let mut model = fit(features, labels, classes, &params)?;
    model.metadata.gamma_grid = config.gamma_grid.clone();
    model.metadata.c_grid = config.c_grid.clone();
    model.metadata.folds = Some(config.folds);
    model.metadata.cv_accuracy = Some(search.accuracy);
    Ok((model, search))
}
