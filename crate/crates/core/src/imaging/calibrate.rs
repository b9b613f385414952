use ndarray::Zip;

use super::stack::{CalibrationPair, ChannelStack};
use crate::error::{Error, Result};

/// Smallest usable `|W - D|` in unit-interval sensor units.
pub const CALIBRATION_EPSILON: f64 = 1e-9;

/// Converts raw counts to reflectance `(I - D) / (W - D)`, clamped to `[0, 1]`.
pub fn normalize_reflectance(raw: &ChannelStack, calib: &CalibrationPair) -> Result<ChannelStack> {
    let unclamped = normalize_reflectance_unclamped(raw, calib)?;
    Ok(unclamped.map_channels(|_, c| c.mapv(|v| v.clamp(0.0, 1.0))))
}

/// Same as [`normalize_reflectance`] without the final clamp.
pub fn normalize_reflectance_unclamped(
    raw: &ChannelStack,
    calib: &CalibrationPair,
) -> Result<ChannelStack> {
    if !raw.same_geometry(&calib.dark) || !raw.same_geometry(&calib.white) {
        return Err(Error::DimensionMismatch(format!(
            "raw stack {}x{}x{} does not match calibration {}x{}x{}",
            raw.width(),
            raw.height(),
            raw.channels(),
            calib.dark.width(),
            calib.dark.height(),
            calib.dark.channels()
        )));
    }
    if !raw.all_finite() {
        return Err(Error::NonFinite("raw stack"));
    }
    let mut out = Vec::with_capacity(raw.channels());
    for k in 0..raw.channels() {
        let (i, d, w) = (raw.channel(k), calib.dark.channel(k), calib.white.channel(k));
        let degenerate = d.indexed_iter().zip(w.iter()).find(|&((_, &dv), &wv)| {
            let span = wv - dv;
            !span.is_finite() || span.abs() < CALIBRATION_EPSILON
        });
        if let Some((((y, x), _), _)) = degenerate {
            return Err(Error::DegenerateCalibration {
                channel: k,
                wavelength: raw.bands()[k].wavelength,
                x,
                y,
                epsilon: CALIBRATION_EPSILON,
            });
        }
        let mut sr = i.clone();
        Zip::from(&mut sr)
            .and(d)
            .and(w)
            .for_each(|s, &dv, &wv| *s = (*s - dv) / (wv - dv));
        out.push(sr);
    }
    ChannelStack::new(raw.bands().to_vec(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::stack::mi_bands;

    fn calib(dark: f64, white: f64) -> CalibrationPair {
        CalibrationPair::new(
            ChannelStack::filled(6, 5, mi_bands(), dark),
            ChannelStack::filled(6, 5, mi_bands(), white),
        )
        .unwrap()
    }

    #[test]
    fn white_maps_to_one_and_dark_to_zero() {
        let c = calib(0.0625, 0.875);
        let one = normalize_reflectance(&c.white, &c).unwrap();
        assert!(one.channel_data().iter().all(|ch| ch.iter().all(|&v| v == 1.0)));
        let zero = normalize_reflectance(&c.dark, &c).unwrap();
        assert!(zero.channel_data().iter().all(|ch| ch.iter().all(|&v| v == 0.0)));
        let mid = ChannelStack::filled(6, 5, mi_bands(), (0.0625 + 0.875) / 2.0);
        let half = normalize_reflectance(&mid, &c).unwrap();
        assert!(half.channel_data().iter().all(|ch| ch.iter().all(|&v| v == 0.5)));
    }

    #[test]
    fn clamps_out_of_range_counts() {
        let c = calib(0.1, 0.8);
        let bright = ChannelStack::filled(6, 5, mi_bands(), 0.95);
        let sr = normalize_reflectance(&bright, &c).unwrap();
        assert!(sr.channel(0).iter().all(|&v| v == 1.0));
        let dim = ChannelStack::filled(6, 5, mi_bands(), 0.01);
        let sr = normalize_reflectance(&dim, &c).unwrap();
        assert!(sr.channel(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_calibration_names_channel() {
        let mut c = calib(0.1, 0.8);
        c.white.channel_mut(4)[[2, 3]] = 0.1;
        let raw = ChannelStack::filled(6, 5, mi_bands(), 0.5);
        match normalize_reflectance(&raw, &c) {
            Err(Error::DegenerateCalibration { channel, x, y, wavelength, .. }) => {
                assert_eq!((channel, x, y), (4, 3, 2));
                assert_eq!(wavelength, 580.0);
            }
            other => panic!("expected degenerate calibration, got {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let c = calib(0.1, 0.8);
        let raw = ChannelStack::filled(7, 5, mi_bands(), 0.5);
        assert!(matches!(
            normalize_reflectance(&raw, &c),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
