use super::stack::{ChannelStack, RGB_WAVELENGTHS};
use crate::error::{Error, Result};

/// Picks three bands out of a stack to mimic an RGB camera.
pub fn simulate_rgb(stack: &ChannelStack, band_indices: [usize; 3]) -> Result<ChannelStack> {
    let [a, b, c] = band_indices;
    if a == b || b == c || a == c {
        return Err(Error::InvalidParameter(format!(
            "RGB band indices must be distinct, got {band_indices:?}"
        )));
    }
    stack.select(&band_indices)
}

/// Channel indices of the given wavelengths, in order.
pub fn band_indices_for(stack: &ChannelStack, wavelengths: &[f64]) -> Result<Vec<usize>> {
    wavelengths
        .iter()
        .map(|&nm| stack.band_index(nm).ok_or(Error::WavelengthAbsent(nm)))
        .collect()
}

/// Indices of the default 700 / 560 / 470 nm selection.
pub fn default_rgb_indices(stack: &ChannelStack) -> Result<[usize; 3]> {
    rgb_indices_for(stack, RGB_WAVELENGTHS)
}

pub fn rgb_indices_for(stack: &ChannelStack, wavelengths: [f64; 3]) -> Result<[usize; 3]> {
    let v = band_indices_for(stack, &wavelengths)?;
    Ok([v[0], v[1], v[2]])
}

/// Simulated RGB using the default 700 / 560 / 470 nm bands.
pub fn simulate_rgb_default(stack: &ChannelStack) -> Result<ChannelStack> {
    simulate_rgb(stack, default_rgb_indices(stack)?)
}
