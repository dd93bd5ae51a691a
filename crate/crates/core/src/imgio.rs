//! 8-bit single-channel PNG/TIFF import and export.
//!
//! Export clamps to [0, 255] and rounds half-to-even; an 8-bit write/read
//! round trip is bit-exact. Anything other than 8-bit grayscale input is
//! rejected with the file named in the error.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat};

use crate::error::{Error, Result};
use crate::image::{Domain, ImagePlane};

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("tif") | Some("tiff") => Ok(ImageFormat::Tiff),
        other => Err(Error::Data(format!(
            "{}: unsupported image extension {:?} (expected png/tif/tiff)",
            path.display(),
            other.unwrap_or("none")
        ))),
    }
}

/// Read an 8-bit grayscale image into a `PixelU8Range` plane.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImagePlane> {
    let path = path.as_ref();
    format_for(path)?;
    let img = image::open(path)
        .map_err(|e| Error::Data(format!("{}: cannot decode image: {e}", path.display())))?;
    let gray: GrayImage = match img {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Data(format!(
                "{}: expected single-channel 8-bit grayscale, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    let (w, h) = gray.dimensions();
    let data: Vec<f64> = gray.into_raw().into_iter().map(|v| v as f64).collect();
    ImagePlane::new(w as usize, h as usize, data, Domain::PixelU8Range)
}

/// Write a plane as 8-bit grayscale, clamping and rounding half-to-even.
pub fn write_image(img: &ImagePlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let bytes = img.to_u8_clamped();
    let gray = GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer length matches dimensions");
    gray.save_with_format(path, format)
        .map_err(|e| Error::Data(format!("{}: cannot write image: {e}", path.display())))
}
