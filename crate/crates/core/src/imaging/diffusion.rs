//! Perona-Malik anisotropic diffusion with exponential conduction.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stack::PixelMask;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiffusionParams {
    pub iterations: usize,
    /// Edge scale in reflectance units.
    pub kappa: f64,
    /// Explicit time step; at most 0.25 for the 4-neighbour scheme.
    pub step: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            iterations: 15,
            kappa: 0.02,
            step: 0.2,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step <= 0.25) {
            return Err(Error::InvalidParameter(format!(
                "diffusion step {} outside (0, 0.25]",
                self.step
            )));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "diffusion kappa {} must be positive",
                self.kappa
            )));
        }
        Ok(())
    }
}

/// Diffuses a single channel with zero-flux (Neumann) borders.
pub fn anisotropic_diffusion(channel: &Array2<f64>, params: &DiffusionParams) -> Result<Array2<f64>> {
    diffuse(channel, None, params)
}

/// Like [`anisotropic_diffusion`], but masked pixels neither give nor receive flux
/// and are returned unchanged.
pub fn anisotropic_diffusion_masked(
    channel: &Array2<f64>,
    mask: &PixelMask,
    params: &DiffusionParams,
) -> Result<Array2<f64>> {
    let (h, w) = channel.dim();
    mask.check_dims(w, h)?;
    diffuse(channel, Some(mask), params)
}

fn diffuse(channel: &Array2<f64>, mask: Option<&PixelMask>, params: &DiffusionParams) -> Result<Array2<f64>> {
    params.validate()?;
    if channel.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("diffusion input"));
    }
    let (h, w) = channel.dim();
    let mut cur = channel.as_standard_layout().into_owned();
    if params.iterations == 0 || h == 0 || w == 0 {
        return Ok(cur);
    }
    let inv_k2 = 1.0 / (params.kappa * params.kappa);
    let conduct = |d: f64| (-(d * d) * inv_k2).exp() * d;
    let active = |y: usize, x: usize| mask.is_none_or(|m| !m.is_masked(x, y));

    // Flux through the east edge of (y, x) and the south edge of (y, x).
    let mut east = Array2::<f64>::zeros((h, w));
    let mut south = Array2::<f64>::zeros((h, w));
    for _ in 0..params.iterations {
        for y in 0..h {
            for x in 0..w {
                let here = cur[[y, x]];
                let live = active(y, x);
                east[[y, x]] = if x + 1 < w && live && active(y, x + 1) {
                    conduct(cur[[y, x + 1]] - here)
                } else {
                    0.0
                };
                south[[y, x]] = if y + 1 < h && live && active(y + 1, x) {
                    conduct(cur[[y + 1, x]] - here)
                } else {
                    0.0
                };
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut net = east[[y, x]] + south[[y, x]];
                if x > 0 {
                    net -= east[[y, x - 1]];
                }
                if y > 0 {
                    net -= south[[y - 1, x]];
                }
                cur[[y, x]] += params.step * net;
            }
        }
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn variance(a: &Array2<f64>) -> f64 {
        let n = a.len() as f64;
        let mean = a.sum() / n;
        a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
    }

    fn noisy(seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((40, 50), |_| 0.4 + rng.random_range(-0.01..0.01))
    }

    #[test]
    fn constant_grid_is_fixed_point() {
        let g = Array2::from_elem((9, 11), 0.37);
        let out = anisotropic_diffusion(&g, &DiffusionParams::default()).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let g = noisy(1);
        let p = DiffusionParams {
            iterations: 0,
            ..Default::default()
        };
        assert_eq!(anisotropic_diffusion(&g, &p).unwrap(), g);
    }

    #[test]
    fn noise_variance_decreases() {
        let g = noisy(2);
        let p = DiffusionParams {
            iterations: 10,
            ..Default::default()
        };
        let out = anisotropic_diffusion(&g, &p).unwrap();
        assert!(variance(&out) < variance(&g));
    }

    #[test]
    fn sum_is_conserved() {
        let g = noisy(3);
        let p = DiffusionParams {
            iterations: 100,
            ..Default::default()
        };
        let out = anisotropic_diffusion(&g, &p).unwrap();
        let rel = (out.sum() - g.sum()).abs() / g.sum().abs();
        assert!(rel < 1e-6, "relative drift {rel}");
    }

    #[test]
    fn masked_pixels_are_untouched_and_isolate() {
        let mut g = noisy(4);
        let mut mask = PixelMask::empty(50, 40);
        for y in 10..20 {
            for x in 10..20 {
                mask.set(x, y, true);
                g[[y, x]] = 1.0;
            }
        }
        let out = anisotropic_diffusion_masked(&g, &mask, &DiffusionParams::default()).unwrap();
        for y in 10..20 {
            for x in 10..20 {
                assert_eq!(out[[y, x]], 1.0);
            }
        }
        // The saturated block must not bleed into its neighbours.
        assert!(out[[9, 15]] < 0.45 && out[[20, 15]] < 0.45);
    }

    #[test]
    fn rejects_unstable_step_and_nan() {
        let g = noisy(5);
        let p = DiffusionParams {
            step: 0.3,
            ..Default::default()
        };
        assert!(matches!(anisotropic_diffusion(&g, &p), Err(Error::InvalidParameter(_))));
        let mut bad = g.clone();
        bad[[0, 0]] = f64::NAN;
        assert!(matches!(
            anisotropic_diffusion(&bad, &DiffusionParams::default()),
            Err(Error::NonFinite(_))
        ));
    }
}
