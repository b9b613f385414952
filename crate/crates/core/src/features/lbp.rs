//! Rotation-invariant uniform local binary patterns (riu2).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::PixelMask;

/// Marks pixels whose circular neighbourhood leaves the image or touches a masked pixel.
pub const INVALID_CODE: u8 = u8::MAX;

/// Radius / neighbour-count pairs for the multi-scale descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbpConfig {
    pub pairs: Vec<(u32, usize)>,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            pairs: vec![(1, 8), (2, 16), (3, 24)],
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pairs.is_empty() {
            return Err(Error::InvalidParameter("LBP config has no (R, P) pairs".into()));
        }
        for &(r, p) in &self.pairs {
            if r < 1 || p < 4 || p + 2 >= INVALID_CODE as usize {
                return Err(Error::InvalidParameter(format!("invalid LBP pair (R={r}, P={p})")));
            }
        }
        Ok(())
    }

    /// Total histogram length per channel: sum of `P + 2`.
    pub fn histogram_len(&self) -> usize {
        self.pairs.iter().map(|&(_, p)| p + 2).sum()
    }
}

/// riu2 code of a circular sequence of threshold bits: the number of set bits
/// if there are at most two 0/1 transitions around the circle, else `P + 1`.
pub fn riu2_code(bits: &[bool]) -> u8 {
    let p = bits.len();
    let transitions = (0..p).filter(|&i| bits[i] != bits[(i + 1) % p]).count();
    if transitions <= 2 {
        bits.iter().filter(|&&b| b).count() as u8
    } else {
        (p + 1) as u8
    }
}

/// riu2 code from the centre value and its sampled neighbours (`g_p >= g_c` sets a bit).
pub fn riu2_from_samples(center: f64, samples: &[f64]) -> u8 {
    let bits: Vec<bool> = samples.iter().map(|&g| g >= center).collect();
    riu2_code(&bits)
}

struct SamplePoint {
    ix: isize,
    iy: isize,
    fx: f64,
    fy: f64,
}

impl SamplePoint {
    fn new(dx: f64, dy: f64) -> Self {
        // Snap values within rounding noise of an integer so axis-aligned
        // samples read a single pixel.
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (dx, dy) = (snap(dx), snap(dy));
        let (ix, iy) = (dx.floor(), dy.floor());
        Self {
            ix: ix as isize,
            iy: iy as isize,
            fx: dx - ix,
            fy: dy - iy,
        }
    }

    fn support(&self) -> impl Iterator<Item = (isize, isize)> + '_ {
        let xs = if self.fx > 0.0 { 2 } else { 1 };
        let ys = if self.fy > 0.0 { 2 } else { 1 };
        (0..ys).flat_map(move |j| (0..xs).map(move |i| (self.ix + i, self.iy + j)))
    }
}

/// Sample offsets on the radius-`r` circle: first at angle 0 (positive x),
/// then counter-clockwise (negative image y).
fn circle(r: u32, p: usize) -> Vec<SamplePoint> {
    (0..p)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / p as f64;
            SamplePoint::new(r as f64 * theta.cos(), -(r as f64) * theta.sin())
        })
        .collect()
}

/// riu2 code of every pixel; [`INVALID_CODE`] where the neighbourhood is incomplete.
pub fn lbp_code_map(channel: &Array2<f64>, radius: u32, points: usize, mask: &PixelMask) -> Result<Array2<u8>> {
    if radius < 1 || points < 4 || points + 2 >= INVALID_CODE as usize {
        return Err(Error::InvalidParameter(format!(
            "invalid LBP pair (R={radius}, P={points})"
        )));
    }
    let (h, w) = channel.dim();
    mask.check_dims(w, h)?;
    let samples = circle(radius, points);
    let mut bits = vec![false; points];
    let mut out = Array2::from_elem((h, w), INVALID_CODE);
    for y in 0..h {
        'pixel: for x in 0..w {
            if mask.is_masked(x, y) {
                continue;
            }
            for s in &samples {
                for (ox, oy) in s.support() {
                    let (sx, sy) = (x as isize + ox, y as isize + oy);
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue 'pixel;
                    }
                    if mask.is_masked(sx as usize, sy as usize) {
                        continue 'pixel;
                    }
                }
            }
            // Interpolate differences to the centre so the comparison
            // depends on differences only.
            let center = channel[[y, x]];
            let at = |xx: usize, yy: usize| channel[[yy, xx]] - center;
            for (bit, s) in bits.iter_mut().zip(&samples) {
                let x0 = (x as isize + s.ix) as usize;
                let y0 = (y as isize + s.iy) as usize;
                let row = |yy: usize| {
                    let a = at(x0, yy);
                    if s.fx > 0.0 {
                        a + s.fx * (at(x0 + 1, yy) - a)
                    } else {
                        a
                    }
                };
                let top = row(y0);
                let d = if s.fy > 0.0 { top + s.fy * (row(y0 + 1) - top) } else { top };
                *bit = d >= 0.0;
            }
            out[[y, x]] = riu2_code(&bits);
        }
    }
    Ok(out)
}

/// Normalised histogram (length `P + 2`, sums to one) of the valid codes inside `region`.
pub fn lbp_histogram(codes: &Array2<u8>, region: &[usize], points: usize) -> Result<Vec<f64>> {
    let (counts, valid) = lbp_counts(codes, region, points);
    if valid == 0 {
        return Err(Error::DegenerateRegion {
            region: 0,
            reason: "no pixel with a complete LBP neighbourhood".into(),
        });
    }
    Ok(counts.into_iter().map(|c| c as f64 / valid as f64).collect())
}

/// Raw code counts and the number of valid pixels.
pub(crate) fn lbp_counts(codes: &Array2<u8>, region: &[usize], points: usize) -> (Vec<usize>, usize) {
    let w = codes.ncols();
    let mut counts = vec![0usize; points + 2];
    let mut valid = 0;
    for &p in region {
        let c = codes[[p / w, p % w]];
        if c != INVALID_CODE {
            counts[c as usize] += 1;
            valid += 1;
        }
    }
    (counts, valid)
}
