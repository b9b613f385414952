use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COUPLING_TOLERANCE: f64 = 1e-10;
pub const COUPLING_MAX_ITERATIONS: usize = 1000;

/// Class membership probabilities: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbabilities(Vec<f64>);

impl ClassProbabilities {
    /// Checks non-negativity and unit sum (within 1e-9).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("empty probability vector".into()));
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParameter(format!("probabilities must be finite and non-negative: {p:?}")));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("probabilities sum to {sum}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(j: usize) -> Self {
        Self(vec![1.0 / j as f64; j])
    }

    pub fn one_hot(j: usize, k: usize) -> Self {
        let mut p = vec![0.0; j];
        p[k] = 1.0;
        Self(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.0.iter().enumerate() {
            if v > self.0[best] {
                best = k;
            }
        }
        best
    }
}

/// Recovers class probabilities from pairwise estimates `r[(i, j)] = P(i | {i, j})`.
///
/// Solves `p_j = sum_{i != j} (p_i + p_j) r_ji / (J - 1)` under `sum(p) = 1`,
/// which rearranges to `p_j sum_{i != j} r_ij = sum_{i != j} r_ji p_i`, by
/// Gauss-Seidel sweeps followed by renormalisation.
pub fn pairwise_couple(r: &Array2<f64>) -> Result<ClassProbabilities> {
    let j = r.nrows();
    if r.ncols() != j || j < 2 {
        return Err(Error::DimensionMismatch(format!("coupling needs a square matrix with J >= 2, got {:?}", r.dim())));
    }
    for a in 0..j {
        for b in 0..j {
            if a == b {
                continue;
            }
            let v = r[(a, b)];
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("r[{a}][{b}] = {v} is outside (0, 1)")));
            }
            if (v + r[(b, a)] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!("r[{a}][{b}] + r[{b}][{a}] != 1")));
            }
        }
    }
    let losses: Vec<f64> = (0..j).map(|c| (0..j).filter(|&i| i != c).map(|i| r[(i, c)]).sum()).collect();
    let mut p = vec![1.0 / j as f64; j];
    let mut change = f64::INFINITY;
    for _ in 0..COUPLING_MAX_ITERATIONS {
        let prev = p.clone();
        for c in 0..j {
            let inflow: f64 = (0..j).filter(|&i| i != c).map(|i| r[(c, i)] * p[i]).sum();
            p[c] = inflow / losses[c];
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        change = p.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if change < COUPLING_TOLERANCE {
            return Ok(ClassProbabilities(p));
        }
    }
    Err(Error::CouplingNotConverged {
        iterations: COUPLING_MAX_ITERATIONS,
        residual: change,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_r(values: &[f64], j: usize) -> Array2<f64> {
        let mut r = Array2::zeros((j, j));
        let mut k = 0;
        for a in 0..j {
            for b in a + 1..j {
                r[(a, b)] = values[k];
                r[(b, a)] = 1.0 - values[k];
                k += 1;
            }
        }
        r
    }

    /// Dense solve of the stationarity equations with one row replaced by `sum(p) = 1`.
    fn linear_oracle(r: &Array2<f64>) -> Vec<f64> {
        let j = r.nrows();
        let mut m = vec![vec![0.0; j + 1]; j];
        for c in 0..j {
            for i in 0..j {
                if i != c {
                    m[c][c] += r[(i, c)];
                    m[c][i] -= r[(c, i)];
                }
            }
        }
        m[j - 1] = vec![1.0; j + 1];
        for col in 0..j {
            let piv = (col..j).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            for row in 0..j {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..=j {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        (0..j).map(|c| m[c][j] / m[c][c]).collect()
    }

    #[test]
    fn two_classes_reduce_to_pair_estimate() {
        let p = pairwise_couple(&random_r(&[0.7], 2)).unwrap();
        assert!((p.as_slice()[0] - 0.7).abs() < 1e-12);
        assert!((p.as_slice()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn indifferent_pairs_give_uniform() {
        for j in 2..=6 {
            let r = random_r(&vec![0.5; j * (j - 1) / 2], j);
            let p = pairwise_couple(&r).unwrap();
            for v in p.as_slice() {
                assert!((v - 1.0 / j as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_inconsistent_matrix() {
        let mut r = random_r(&[0.7, 0.4, 0.2], 3);
        r[(1, 0)] = 0.5;
        assert!(pairwise_couple(&r).is_err());
        let r = random_r(&[1.0, 0.4, 0.2], 3);
        assert!(pairwise_couple(&r).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        let p = ClassProbabilities::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert_eq!(p.argmax(), 0);
        assert!(ClassProbabilities::new(vec![0.5, 0.6]).is_err());
        assert!(ClassProbabilities::new(vec![1.5, -0.5]).is_err());
    }

    proptest! {
        #[test]
        fn matches_dense_solve(j in 3usize..=6, values in prop::collection::vec(0.01f64..0.99, 15)) {
            let r = random_r(&values, j);
            let p = pairwise_couple(&r).unwrap();
            let oracle = linear_oracle(&r);
            let s: f64 = p.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            for (a, b) in p.as_slice().iter().zip(&oracle) {
                prop_assert!(*a >= 0.0);
                prop_assert!((a - b).abs() < 1e-8, "{:?} vs {:?}", p, oracle);
            }
        }

        #[test]
        fn permutation_equivariant(values in prop::collection::vec(0.01f64..0.99, 10), shift in 1usize..5) {
            let j = 5;
            let r = random_r(&values, j);
            let perm: Vec<usize> = (0..j).map(|k| (k + shift) % j).collect();
            let mut rp = Array2::zeros((j, j));
            for a in 0..j {
                for b in 0..j {
                    rp[(perm[a], perm[b])] = r[(a, b)];
                }
            }
            let p = pairwise_couple(&r).unwrap();
            let q = pairwise_couple(&rp).unwrap();
            for a in 0..j {
                prop_assert!((p.as_slice()[a] - q.as_slice()[perm[a]]).abs() < 1e-9);
            }
        }
    }
}
