//! Uncertainty-aware superpixel classification and image tagging for
//! multispectral and RGB images.

pub mod error;
pub mod imaging;

pub use error::{Error, ErrorKind, Result};
pub mod classifier;
pub mod confidence;
pub mod features;
pub mod pipeline;
pub mod superpixel;
