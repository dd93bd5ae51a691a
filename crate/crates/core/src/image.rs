//! Value-domain-aware single-channel image container.
//!
//! Every image carries a [`Domain`] tag recording which value domain its
//! samples live in. Pipeline stages check the tag of their inputs and tag
//! their outputs, so a patch that skipped the Anscombe transform or the
//! rescale step is rejected instead of silently producing garbage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value domain a plane's samples are expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// Intended range [0, 255]; clamped on export, not on intermediates.
    PixelU8Range,
    /// Output of the forward Anscombe transform, range ≈ [1.2247, 31.961].
    Anscombe,
    /// Anscombe values affinely mapped onto [0, 255].
    AnscombeRescaled,
    /// No particular range contract.
    Arbitrary,
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Domain::PixelU8Range => "pixel-u8-range",
            Domain::Anscombe => "anscombe",
            Domain::AnscombeRescaled => "anscombe-rescaled",
            Domain::Arbitrary => "arbitrary",
        };
        f.write_str(name)
    }
}

/// Closed interval of sample values, used by the affine rescale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
}

impl ValueRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!(
                "value range endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo >= hi {
            return Err(Error::Config(format!(
                "degenerate value range [{lo}, {hi}]: lo must be < hi"
            )));
        }
        Ok(ValueRange { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Range spanned by the forward Anscombe transform on 8-bit input,
/// [2·sqrt(3/8), 2·sqrt(255 + 3/8)].
pub fn anscombe_range() -> ValueRange {
    ValueRange {
        lo: 2.0 * (3.0 / 8.0f64).sqrt(),
        hi: 2.0 * (255.0 + 3.0 / 8.0f64).sqrt(),
    }
}

/// The nominal 8-bit pixel range [0, 255].
pub fn pixel_range() -> ValueRange {
    ValueRange { lo: 0.0, hi: 255.0 }
}

/// 2-D single-channel floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    data: Vec<f64>,
    domain: Domain,
}

impl ImagePlane {
    /// Build a plane from row-major samples, validating shape and finiteness.
    pub fn new(width: usize, height: usize, data: Vec<f64>, domain: Domain) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite sample {} at index {i}",
                data[i]
            )));
        }
        Ok(ImagePlane {
            width,
            height,
            data,
            domain,
        })
    }

    /// Constant-valued plane.
    pub fn constant(width: usize, height: usize, value: f64, domain: Domain) -> Result<Self> {
        ImagePlane::new(width, height, vec![value; width * height], domain)
    }

    /// Build from a function of (row, col).
    pub fn from_fn(
        width: usize,
        height: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        ImagePlane::new(width, height, data, domain)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    /// One row of samples.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Same pixels under a different domain tag. Tags record intent; the
    /// caller asserts the samples actually live in the new domain.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Fail unless the plane carries `expected`.
    pub fn require_domain(&self, expected: Domain, context: &str) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Domain(format!(
                "{context}: expected domain {expected}, got {}",
                self.domain
            )));
        }
        Ok(())
    }

    /// Elementwise map producing a new plane in the given domain.
    pub fn map(&self, domain: Domain, f: impl Fn(f64) -> f64) -> Result<ImagePlane> {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        ImagePlane::new(self.width, self.height, data, domain)
    }

    /// Crop a `size`×`size` square whose top-left corner is (row, col).
    pub fn crop_square(&self, row: usize, col: usize, size: usize) -> Result<ImagePlane> {
        if row + size > self.height || col + size > self.width {
            return Err(Error::Dimension(format!(
                "crop {size}x{size} at ({row}, {col}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(size * size);
        for r in row..row + size {
            data.extend_from_slice(&self.data[r * self.width + col..r * self.width + col + size]);
        }
        ImagePlane::new(size, size, data, self.domain)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Samples clamped to [0, 255] and rounded half-to-even, as exported.
    pub fn to_u8_clamped(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round_ties_even() as u8)
            .collect()
    }

    /// Maximum absolute difference to another plane of the same shape.
    pub fn max_abs_diff(&self, other: &ImagePlane) -> Result<f64> {
        check_same_dims(self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn check_same_dims(a: &ImagePlane, b: &ImagePlane) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Dimension(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Affine map of sample values from `src` onto `dst`.
///
/// The domain tag is preserved; pipeline helpers that implement a specific
/// domain change re-tag explicitly.
pub fn affine_rescale(img: &ImagePlane, src: ValueRange, dst: ValueRange) -> Result<ImagePlane> {
    if src.lo >= src.hi {
        return Err(Error::Config(format!(
            "degenerate source range [{}, {}]",
            src.lo, src.hi
        )));
    }
    let scale = dst.width() / src.width();
    img.map(img.domain(), |v| (v - src.lo) * scale + dst.lo)
}

/// Forward-rescale an Anscombe-domain plane onto [0, 255].
pub fn anscombe_rescale_forward(img: &ImagePlane) -> Result<ImagePlane> {
    img.require_domain(Domain::Anscombe, "anscombe_rescale_forward")?;
    Ok(affine_rescale(img, anscombe_range(), pixel_range())?.with_domain(Domain::AnscombeRescaled))
}

/// Invert [`anscombe_rescale_forward`], recovering Anscombe-domain values.
pub fn anscombe_rescale_inverse(img: &ImagePlane) -> Result<ImagePlane> {
    img.require_domain(Domain::AnscombeRescaled, "anscombe_rescale_inverse")?;
    Ok(affine_rescale(img, pixel_range(), anscombe_range())?.with_domain(Domain::Anscombe))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims_and_bad_length() {
        assert!(ImagePlane::new(0, 4, vec![], Domain::Arbitrary).is_err());
        assert!(ImagePlane::new(2, 2, vec![0.0; 3], Domain::Arbitrary).is_err());
    }

    #[test]
    fn rejects_non_finite_samples() {
        let err = ImagePlane::new(2, 1, vec![1.0, f64::NAN], Domain::Arbitrary);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn identity_rescale_is_identity() {
        let img = ImagePlane::from_fn(8, 4, Domain::PixelU8Range, |r, c| (r * 8 + c) as f64)
            .unwrap();
        let out = affine_rescale(&img, pixel_range(), pixel_range()).unwrap();
        assert_eq!(out.data(), img.data());
    }

    #[test]
    fn lower_endpoint_maps_to_lower_endpoint() {
        let lo = anscombe_range().lo;
        let img = ImagePlane::constant(3, 3, lo, Domain::Anscombe).unwrap();
        let out = affine_rescale(&img, anscombe_range(), pixel_range()).unwrap();
        for &v in out.data() {
            assert!(v.abs() < 1e-12, "expected 0, got {v}");
        }
    }

    #[test]
    fn rescale_round_trip_close_to_identity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let img = ImagePlane::from_fn(17, 13, Domain::Arbitrary, |_, _| {
            rng.random_range(0.0..255.0)
        })
        .unwrap();
        let src = ValueRange::new(0.0, 255.0).unwrap();
        let dst = ValueRange::new(-3.0, 7.5).unwrap();
        let there = affine_rescale(&img, src, dst).unwrap();
        let back = affine_rescale(&there, dst, src).unwrap();
        assert!(back.max_abs_diff(&img).unwrap() < 1e-10);
    }

    #[test]
    fn degenerate_source_range_is_rejected() {
        let img = ImagePlane::constant(2, 2, 1.0, Domain::Arbitrary).unwrap();
        let src = ValueRange { lo: 1.0, hi: 1.0 };
        assert!(affine_rescale(&img, src, pixel_range()).is_err());
    }

    #[test]
    fn export_clamps_and_rounds_half_to_even() {
        let img = ImagePlane::new(
            4,
            1,
            vec![-5.0, 300.0, 0.5, 1.5],
            Domain::PixelU8Range,
        )
        .unwrap();
        assert_eq!(img.to_u8_clamped(), vec![0, 255, 0, 2]);
    }
}
