use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;
const GRADIENT_TOL: f64 = 1e-5;

/// Calibrated probabilities are kept inside `[R_MIN, 1 - R_MIN]`.
pub const R_MIN: f64 = 1e-7;

/// Sigmoid `r = 1 / (1 + exp(A d + B))` mapping a decision value to `P(y = +1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidCalibration {
    pub a: f64,
    pub b: f64,
}

impl SigmoidCalibration {
    /// Used when the decision values carry no ordering information.
    pub const FALLBACK: SigmoidCalibration = SigmoidCalibration { a: -1.0, b: 0.0 };

    pub fn probability(&self, d: f64) -> f64 {
        let f = self.a * d + self.b;
        let r = if f >= 0.0 {
            let e = (-f).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + f.exp())
        };
        r.clamp(R_MIN, 1.0 - R_MIN)
    }
}

fn objective(dec: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    dec.iter()
        .zip(targets)
        .map(|(d, t)| {
            let f = d * a + b;
            if f >= 0.0 {
                t * f + (-f).exp().ln_1p()
            } else {
                (t - 1.0) * f + f.exp().ln_1p()
            }
        })
        .sum()
}

/// Fits the sigmoid by Newton's method with backtracking on the smoothed-target
/// log-likelihood. Labels are `+1` / `-1`.
///
/// If every decision value is identical the fit is skipped and
/// [`SigmoidCalibration::FALLBACK`] returned.
pub fn platt_fit(decision_values: &[f64], labels: &[f64]) -> Result<SigmoidCalibration> {
    if decision_values.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} decision values but {} labels",
            decision_values.len(),
            labels.len()
        )));
    }
    if decision_values.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("decision values"));
    }
    let pos = labels.iter().filter(|&&y| y > 0.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let d0 = decision_values[0];
    if decision_values.iter().all(|&d| d == d0) {
        warn!("all decision values equal {d0}; using fallback calibration");
        return Ok(SigmoidCalibration::FALLBACK);
    }

    let hi = (pos as f64 + 1.0) / (pos as f64 + 2.0);
    let lo = 1.0 / (neg as f64 + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&y| if y > 0.0 { hi } else { lo }).collect();
    let dec = decision_values;

    let mut a = 0.0;
    let mut b = ((neg as f64 + 1.0) / (pos as f64 + 1.0)).ln();
    let mut fval = objective(dec, &targets, a, b);
    let mut iter = 0;
    while iter < MAX_ITERATIONS {
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (d, t) in dec.iter().zip(&targets) {
            let f = d * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += d * d * d2;
            h22 += d2;
            h21 += d * d2;
            let d1 = t - p;
            g1 += d * d1;
            g2 += d1;
        }
        if g1.abs() < GRADIENT_TOL && g2.abs() < GRADIENT_TOL {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(dec, &targets, na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            warn!("sigmoid fit: line search failed");
            break;
        }
        iter += 1;
    }
    if iter >= MAX_ITERATIONS {
        warn!("sigmoid fit: reached {MAX_ITERATIONS} iterations");
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("sigmoid parameters"));
    }
    Ok(SigmoidCalibration { a, b })
}
