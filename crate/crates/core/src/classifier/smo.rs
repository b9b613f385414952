use log::warn;
use serde::{Deserialize, Serialize};

use super::kernel::{rbf_kernel, squared_distance};
use crate::error::{Error, Result};

/// Default stopping tolerance on the maximal KKT violation.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

/// Floor for the curvature of a two-variable subproblem.
const MIN_CURVATURE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Update limit; `None` means `10 * n` passes of `n` updates each.
    pub max_iterations: Option<usize>,
}

impl SmoParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            tol: DEFAULT_TOLERANCE,
            max_iterations: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    pub(crate) fn iteration_limit(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n * n)
    }
}

/// Binary RBF SVM `f(x) = sum_k coef_k K(sv_k, x) + b`; positive values favour `pair.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvmModel {
    pub pair: (usize, usize),
    pub support_vectors: Vec<Vec<f64>>,
    /// `a_k * y_k` for each support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

impl BinarySvmModel {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, a)| a * rbf_kernel(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.decision_value(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Solution of the SVM dual for one labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Gradient of the dual objective, `Q a - 1`.
    pub gradient: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub violation: f64,
    pub converged: bool,
}

impl DualSolution {
    /// Dual objective `a'Qa / 2 - sum(a)`, to be minimised.
    pub fn objective(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.gradient)
            .map(|(a, g)| a * (g - 1.0))
            .sum::<f64>()
    }
}

/// Minimises `a'Qa / 2 - sum(a)` subject to `0 <= a <= c` and `y'a = 0`, where
/// `Q_ij = y_i y_j K_ij` and `kernel` is the row-major `n x n` Gram matrix.
///
/// Each step updates the maximal violating pair. `warm` supplies a feasible
/// starting point together with its gradient.
pub fn solve_dual(
    kernel: &[f64],
    y: &[f64],
    c: f64,
    tol: f64,
    max_iterations: usize,
    warm: Option<(Vec<f64>, Vec<f64>)>,
) -> DualSolution {
    let n = y.len();
    debug_assert_eq!(kernel.len(), n * n);
    let (mut alpha, mut grad) = warm.unwrap_or_else(|| (vec![0.0; n], vec![-1.0; n]));
    let status = |t: usize, a: f64| if y[t] > 0.0 { (a < c, a > 0.0) } else { (a > 0.0, a < c) };
    let (mut up, mut low): (Vec<bool>, Vec<bool>) = (0..n).map(|t| status(t, alpha[t])).unzip();
    let mut iterations = 0;
    let (mut i, mut j, mut violation) = scan(&up, &low, &mut grad, y, |_| 0.0);
    while violation >= tol && iterations < max_iterations {
        iterations += 1;
        let ki = &kernel[i * n..(i + 1) * n];
        let kj = &kernel[j * n..(j + 1) * n];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = (ki[i] + kj[j] - 2.0 * ki[j]).max(MIN_CURVATURE);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        (up[i], low[i]) = status(i, alpha[i]);
        (up[j], low[j]) = status(j, alpha[j]);
        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        // Gradient update fused with the next pair selection.
        (i, j, violation) = scan(&up, &low, &mut grad, y, |t| y[t] * (ki[t] * di + kj[t] * dj));
    }
    let bias = bias_from_gradient(&alpha, &grad, y, c);
    DualSolution {
        alpha,
        gradient: grad,
        bias,
        iterations,
        violation,
        converged: violation < tol,
    }
}

/// Adds `step(t)` to every gradient entry and returns the maximal violating
/// pair `(i, j)` with its KKT gap. `i` maximises `-y G` over the indices
/// that may move up along `y` (`up`), `j` minimises it over those that may
/// move down (`low`).
#[inline(always)]
fn scan(up: &[bool], low: &[bool], grad: &mut [f64], y: &[f64], step: impl Fn(usize) -> f64) -> (usize, usize, f64) {
    let mut g_max = f64::NEG_INFINITY;
    let mut g_min = f64::INFINITY;
    let mut i = usize::MAX;
    let mut j = usize::MAX;
    for t in 0..grad.len() {
        grad[t] += step(t);
        let v = -y[t] * grad[t];
        if up[t] && v >= g_max {
            g_max = v;
            i = t;
        }
        if low[t] && v <= g_min {
            g_min = v;
            j = t;
        }
    }
    let violation = if i == usize::MAX || j == usize::MAX { 0.0 } else { g_max - g_min };
    (i, j, violation)
}

/// Bias averaged over free support vectors, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn bias_from_gradient(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free = 0usize;
    let mut sum = 0.0;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        let at_upper = alpha[t] >= c;
        let at_lower = alpha[t] <= 0.0;
        if at_upper {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum += yg;
        }
    }
    let rho = if free > 0 {
        sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else {
        0.0
    };
    -rho
}

pub(crate) fn check_labels(y: &[f64]) -> Result<()> {
    if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter(format!("labels must be +1 or -1, got {bad}")));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Builds the model from a dual solution, keeping vectors with `a > 0`.
pub(crate) fn model_from_solution(x: &[Vec<f64>], y: &[f64], sol: &DualSolution, params: &SmoParams) -> BinarySvmModel {
    let (support_vectors, dual_coef) = sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(k, &a)| (x[k].clone(), a * y[k]))
        .unzip();
    BinarySvmModel {
        pair: (0, 1),
        support_vectors,
        dual_coef,
        bias: sol.bias,
        gamma: params.gamma,
        c: params.c,
    }
}

/// Trains a binary RBF SVM on labels in `{+1, -1}`.
///
/// Fails with [`Error::NotConverged`] if the KKT violation is still above
/// `params.tol` after the iteration limit.
pub fn smo_train(x: &[Vec<f64>], y: &[f64], params: &SmoParams) -> Result<BinarySvmModel> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vectors but {} labels", x.len(), y.len())));
    }
    check_labels(y)?;
    let n = x.len();
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        kernel[i * n + i] = 1.0;
        for j in 0..i {
            let k = (-params.gamma * squared_distance(&x[i], &x[j])).exp();
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let sol = solve_dual(&kernel, y, params.c, params.tol, params.iteration_limit(n), None);
    if !sol.converged {
        warn!(
            "SMO stopped after {} iterations with violation {:e}",
            sol.iterations, sol.violation
        );
        return Err(Error::NotConverged {
            iterations: sol.iterations,
            violation: sol.violation,
        });
    }
    Ok(model_from_solution(x, y, &sol, params))
}
