use crate::error::{Error, Result};
use crate::imaging::{ChannelStack, PixelMask};

/// Mean reflectance per channel over the unmasked pixels of `region`,
/// L2-normalised across channels.
pub fn average_spectrum(sr: &ChannelStack, region: &[usize], mask: &PixelMask) -> Result<Vec<f64>> {
    mask.check_dims(sr.width(), sr.height())?;
    let w = sr.width();
    let usable: Vec<(usize, usize)> = region
        .iter()
        .map(|&p| (p % w, p / w))
        .filter(|&(x, y)| !mask.is_masked(x, y))
        .collect();
    if usable.is_empty() {
        return Err(Error::DegenerateRegion {
            region: 0,
            reason: "every pixel is masked".into(),
        });
    }
    let m = usable.len() as f64;
    let mean: Vec<f64> = sr
        .channel_data()
        .iter()
        .map(|c| usable.iter().map(|&(x, y)| c[[y, x]]).sum::<f64>() / m)
        .collect();
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateRegion {
            region: 0,
            reason: "average spectrum has zero norm".into(),
        });
    }
    Ok(mean.into_iter().map(|v| v / norm).collect())
}
