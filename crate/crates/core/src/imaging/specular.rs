use ndarray::Array2;

use super::stack::{ChannelStack, PixelMask};
use crate::error::{Error, Result};

pub const DEFAULT_V_THRESHOLD: f64 = 0.95;

/// Masks specular highlights: pixels whose HSV value (max of the three
/// colour channels) exceeds `v_threshold`.
pub fn mask_specular(stack: &ChannelStack, rgb_indices: [usize; 3], v_threshold: f64) -> Result<PixelMask> {
    if stack.channels() < 3 {
        return Err(Error::InvalidParameter(format!(
            "specular masking needs 3 channels, stack has {}",
            stack.channels()
        )));
    }
    if let Some(&bad) = rgb_indices.iter().find(|&&i| i >= stack.channels()) {
        return Err(Error::InvalidParameter(format!("colour channel index {bad} out of range")));
    }
    if !(v_threshold > 0.0 && v_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "V threshold {v_threshold} outside (0, 1]"
        )));
    }
    let [r, g, b] = rgb_indices.map(|i| stack.channel(i));
    let bits = Array2::from_shape_fn((stack.height(), stack.width()), |idx| {
        r[idx].max(g[idx]).max(b[idx]) > v_threshold
    });
    Ok(PixelMask::from_array(bits))
}
