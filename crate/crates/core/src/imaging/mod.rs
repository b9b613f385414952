//! Image stacks, reflectance calibration, denoising, specular masking and
//! synthetic phantoms.

mod calibrate;
mod diffusion;
pub mod io;
mod phantom;
mod rgb;
mod specular;
mod stack;

pub use calibrate::{normalize_reflectance, normalize_reflectance_unclamped, CALIBRATION_EPSILON};
pub use diffusion::{anisotropic_diffusion, anisotropic_diffusion_masked, DiffusionParams};
pub use phantom::{
    default_organs, gaussian_blur, generate_phantom, smooth_field, ClassModel, Phantom, PhantomSpec,
    TextureModel,
};
pub use rgb::{band_indices_for, default_rgb_indices, rgb_indices_for, simulate_rgb, simulate_rgb_default};
pub use specular::{mask_specular, DEFAULT_V_THRESHOLD};
pub use stack::{
    mi_bands, Band, CalibrationPair, ChannelStack, GroundTruth, PixelMask, MI_FWHM, MI_WAVELENGTHS,
    RGB_WAVELENGTHS,
};
