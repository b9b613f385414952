//! Linear spectral clustering.
//!
//! Each pixel is lifted to a ten-dimensional feature `phi` whose inner
//! products approximate a normalised cosine kernel over CIELAB colour and
//! position. Weighted k-means in that space, with weights `w = phi . mean(phi)`,
//! is equivalent to normalised cuts on the kernel; in practice it reduces to
//! k-means on `phi / w` with per-pixel weights `w`, searched locally around
//! each centre as in SLIC.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{connectivity::enforce_connectivity, SuperpixelSegmentation};
use crate::error::{Error, Result};
use crate::imaging::ChannelStack;

const DIM: usize = 10;
const COLOR_COEFF: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LscParams {
    /// Side of the average superpixel, pixels.
    pub avg_size: usize,
    /// Weight of the spatial term relative to colour, in `(0, 1]`.
    pub compactness: f64,
    pub max_iterations: usize,
    /// Stop once fewer than this fraction of pixels change cluster.
    pub convergence_fraction: f64,
}

impl Default for LscParams {
    fn default() -> Self {
        Self {
            avg_size: 150,
            compactness: 0.1,
            max_iterations: 20,
            convergence_fraction: 0.001,
        }
    }
}

impl LscParams {
    pub fn with_size(avg_size: usize) -> Self {
        Self {
            avg_size,
            ..Default::default()
        }
    }

    /// Regions smaller than this are merged into a neighbour.
    pub fn min_region_size(&self) -> usize {
        (self.avg_size * self.avg_size / 16).max(1)
    }
}

/// Segments a 3-channel (R, G, B) image with values in `[0, 1]`.
pub fn lsc_segment(rgb: &ChannelStack, params: &LscParams) -> Result<SuperpixelSegmentation> {
    if rgb.channels() != 3 {
        return Err(Error::InvalidParameter(format!(
            "LSC needs a 3-channel image, got {}",
            rgb.channels()
        )));
    }
    if !(params.compactness > 0.0 && params.compactness <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "compactness {} outside (0, 1]",
            params.compactness
        )));
    }
    let (w, h) = (rgb.width(), rgb.height());
    let step = params.avg_size;
    if step == 0 || step > w || step > h || step * step >= w * h {
        return Err(Error::InvalidParameter(format!(
            "image {w}x{h} is smaller than one {step}x{step} seed cell"
        )));
    }
    if !rgb.all_finite() {
        return Err(Error::NonFinite("LSC input"));
    }

    let n = w * h;
    let lab: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            rgb_to_lab([
                rgb.channel(0)[[y, x]],
                rgb.channel(1)[[y, x]],
                rgb.channel(2)[[y, x]],
            ])
        })
        .collect();

    // Lifted features and their weights.
    let spatial = COLOR_COEFF * params.compactness;
    let mut phi: Vec<[f64; DIM]> = (0..n)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let [l, a, b] = lab[i];
            let tl = FRAC_PI_2 * (l / 100.0).clamp(0.0, 1.0);
            let ta = FRAC_PI_2 * ((a + 128.0) / 255.0).clamp(0.0, 1.0);
            let tb = FRAC_PI_2 * ((b + 128.0) / 255.0).clamp(0.0, 1.0);
            let tx = FRAC_PI_2 * x as f64 / step as f64;
            let ty = FRAC_PI_2 * y as f64 / step as f64;
            [
                COLOR_COEFF * tl.cos(),
                COLOR_COEFF * tl.sin(),
                2.55 * COLOR_COEFF * ta.cos(),
                2.55 * COLOR_COEFF * ta.sin(),
                2.55 * COLOR_COEFF * tb.cos(),
                2.55 * COLOR_COEFF * tb.sin(),
                spatial * tx.cos(),
                spatial * tx.sin(),
                spatial * ty.cos(),
                spatial * ty.sin(),
            ]
        })
        .collect();
    let mut mean = [0.0; DIM];
    for f in &phi {
        for d in 0..DIM {
            mean[d] += f[d];
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let weight: Vec<f64> = phi
        .iter()
        .map(|f| f.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>().max(1e-12))
        .collect();
    for (f, &wt) in phi.iter_mut().zip(&weight) {
        for v in f.iter_mut() {
            *v /= wt;
        }
    }
    // `phi` now holds phi / w.

    // Seeds on a regular grid, nudged to the lowest-gradient pixel nearby.
    let nx = ((w as f64 / step as f64).round() as usize).max(1);
    let ny = ((h as f64 / step as f64).round() as usize).max(1);
    let gradient = |x: usize, y: usize| -> f64 {
        let at = |xx: usize, yy: usize| lab[yy * w + xx];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let dx: f64 = (0..3).map(|c| (at(xr, y)[c] - at(xl, y)[c]).powi(2)).sum();
        let dy: f64 = (0..3).map(|c| (at(x, yd)[c] - at(x, yu)[c]).powi(2)).sum();
        dx + dy
    };
    let mut centers: Vec<Center> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let sx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let sy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            let mut best = (gradient(sx, sy), sx, sy);
            for yy in sy.saturating_sub(1)..=(sy + 1).min(h - 1) {
                for xx in sx.saturating_sub(1)..=(sx + 1).min(w - 1) {
                    let g = gradient(xx, yy);
                    if g < best.0 {
                        best = (g, xx, yy);
                    }
                }
            }
            let (_, bx, by) = best;
            centers.push(Center {
                feature: phi[by * w + bx],
                x: bx as f64,
                y: by as f64,
            });
        }
    }

    // Initial assignment: the seed grid cell.
    let mut labels: Vec<u32> = (0..n)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let i = (x * nx / w).min(nx - 1);
            let j = (y * ny / h).min(ny - 1);
            (j * nx + i) as u32
        })
        .collect();

    let mut dist = vec![f64::INFINITY; n];
    let radius = step as isize;
    for _ in 0..params.max_iterations {
        dist.fill(f64::INFINITY);
        let mut next = labels.clone();
        for (k, c) in centers.iter().enumerate() {
            let cx = c.x.round() as isize;
            let cy = c.y.round() as isize;
            let x0 = (cx - radius).max(0) as usize;
            let x1 = ((cx + radius) as usize).min(w - 1);
            let y0 = (cy - radius).max(0) as usize;
            let y1 = ((cy + radius) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let p = y * w + x;
                    let d = sq_dist(&phi[p], &c.feature);
                    // Strict comparison: on ties the earlier (lower) id keeps the pixel.
                    if d < dist[p] {
                        dist[p] = d;
                        next[p] = k as u32;
                    }
                }
            }
        }
        let changed = next.iter().zip(&labels).filter(|(a, b)| a != b).count();
        labels = next;

        // Weighted means.
        let mut sums = vec![([0.0; DIM], 0.0f64, 0.0f64, 0.0f64, 0usize); centers.len()];
        for p in 0..n {
            let k = labels[p] as usize;
            let s = &mut sums[k];
            let wt = weight[p];
            for d in 0..DIM {
                s.0[d] += wt * phi[p][d];
            }
            s.1 += wt;
            s.2 += (p % w) as f64;
            s.3 += (p / w) as f64;
            s.4 += 1;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s.4 == 0 {
                continue;
            }
            for d in 0..DIM {
                c.feature[d] = s.0[d] / s.1;
            }
            c.x = s.2 / s.4 as f64;
            c.y = s.3 / s.4 as f64;
        }
        if (changed as f64) < params.convergence_fraction * n as f64 {
            break;
        }
    }

    let labels = enforce_connectivity(w, h, &labels, params.min_region_size());
    SuperpixelSegmentation::from_labels(w, h, labels)
}

struct Center {
    feature: [f64; DIM],
    x: f64,
    y: f64,
}

#[inline]
fn sq_dist(a: &[f64; DIM], b: &[f64; DIM]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Linear RGB in `[0, 1]` to CIELAB (D65).
fn rgb_to_lab([r, g, b]: [f64; 3]) -> [f64; 3] {
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let f = |t: f64| {
        if t > 216.0 / 24389.0 {
            t.cbrt()
        } else {
            (24389.0 / 27.0 * t + 16.0) / 116.0
        }
    };
    let (fx, fy, fz) = (f(x / 0.950_47), f(y), f(z / 1.088_83));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Band;
    use ndarray::Array2;

    fn rgb_from(w: usize, h: usize, f: impl Fn(usize, usize) -> [f64; 3]) -> ChannelStack {
        let bands = [700.0, 560.0, 470.0]
            .map(|wavelength| Band { wavelength, fwhm: 20.0 })
            .to_vec();
        let data = (0..3)
            .map(|c| Array2::from_shape_fn((h, w), |(y, x)| f(x, y)[c]))
            .collect();
        ChannelStack::new(bands, data).unwrap()
    }

    fn check_partition(seg: &SuperpixelSegmentation) {
        let total: usize = seg.regions().iter().map(Vec::len).sum();
        assert_eq!(total, seg.width() * seg.height());
        assert!(seg.regions().iter().all(|r| !r.is_empty()));
        assert!(seg.is_connected());
    }

    #[test]
    fn lab_of_white_and_black() {
        let white = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        assert_eq!(rgb_to_lab([0.0; 3])[0], 0.0);
    }

    #[test]
    fn uniform_image_gives_grid() {
        let rgb = rgb_from(128, 96, |_, _| [0.4, 0.3, 0.2]);
        let seg = lsc_segment(&rgb, &LscParams::with_size(32)).unwrap();
        check_partition(&seg);
        assert_eq!(seg.len(), 12);
        for r in seg.regions() {
            assert!(r.len() >= 32 * 32 / 2 && r.len() <= 32 * 32 * 2, "size {}", r.len());
        }
    }

    #[test]
    fn vertical_edge_is_recovered() {
        let (w, h, edge) = (160, 96, 77);
        let rgb = rgb_from(w, h, |x, _| if x < edge { [0.6, 0.2, 0.2] } else { [0.2, 0.5, 0.6] });
        let seg = lsc_segment(&rgb, &LscParams::with_size(32)).unwrap();
        check_partition(&seg);
        // Boundary recall: each row must have a label change within one
        // column of the true edge.
        let hits = (0..h)
            .filter(|&y| (edge - 2..=edge).any(|x| seg.label(x, y) != seg.label(x + 1, y)))
            .count();
        assert!(hits as f64 >= 0.95 * h as f64, "recall {hits}/{h}");
        // No region straddles the edge.
        for r in seg.regions() {
            let left = r.iter().filter(|&&p| p % w < edge).count();
            assert!(left == 0 || left == r.len());
        }
    }

    #[test]
    fn full_frame_geometry_count() {
        let rgb = rgb_from(1228, 1029, |x, y| {
            let v = 0.3 + 0.05 * ((x as f64 / 37.0).sin() * (y as f64 / 53.0).cos());
            [v, 0.8 * v, 0.6 * v]
        });
        let seg = lsc_segment(&rgb, &LscParams::default()).unwrap();
        check_partition(&seg);
        let expected = (1228.0 * 1029.0 / (150.0 * 150.0) as f64).ceil();
        let n = seg.len() as f64;
        assert!((n - expected).abs() <= 0.5 * expected, "N = {n}");
        assert!((50.0..=60.0).contains(&n), "N = {n}");
    }

    #[test]
    fn deterministic() {
        let rgb = rgb_from(100, 80, |x, y| [((x * y) % 7) as f64 / 7.0, (x % 5) as f64 / 5.0, 0.3]);
        let p = LscParams::with_size(20);
        assert_eq!(lsc_segment(&rgb, &p).unwrap(), lsc_segment(&rgb, &p).unwrap());
    }

    #[test]
    fn too_small_image_rejected() {
        let rgb = rgb_from(20, 20, |_, _| [0.5; 3]);
        assert!(lsc_segment(&rgb, &LscParams::with_size(32)).is_err());
        assert!(lsc_segment(&rgb, &LscParams::with_size(20)).is_err());
    }
}
