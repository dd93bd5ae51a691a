//! despeckle: self-supervised speckle denoising for OCT-style imagery.
//!
//! Trains an image-to-image U-Net from a single real noisy observation per
//! image by synthesizing "noisier" and "noisier+" versions in the Anscombe
//! domain, then compares the result against classical single-image
//! denoisers (total variation, wavelet BayesShrink, non-local means, BM3D)
//! under PSNR/SSIM.

pub mod anscombe;
pub mod dataset;
pub mod error;
pub mod image;
pub mod imgio;
pub mod manifest;
pub mod metrics;
pub mod net;
pub mod noise;
pub mod probe;
pub mod seeds;

pub use error::{Error, Result};
pub use image::{Domain, ImagePlane, ValueRange};
pub mod cli;
