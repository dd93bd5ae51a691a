//! Minimal NCHW tensor used by the network.

use crate::error::{Error, Result};
use crate::image::{Domain, ImagePlane};

/// Dense 4-D array in (batch, channel, height, width) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    #[inline]
    pub fn plane(&self, ni: usize, ci: usize) -> &[f64] {
        let hw = self.h * self.w;
        let off = (ni * self.c + ci) * hw;
        &self.data[off..off + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, ni: usize, ci: usize) -> &mut [f64] {
        let hw = self.h * self.w;
        let off = (ni * self.c + ci) * hw;
        &mut self.data[off..off + hw]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Stack single-channel planes into a batch tensor.
    pub fn from_planes(planes: &[&ImagePlane]) -> Result<Tensor4> {
        let first = planes.first().ok_or_else(|| {
            Error::Dimension("cannot build a tensor from zero planes".into())
        })?;
        let (w, h) = (first.width(), first.height());
        let mut t = Tensor4::zeros(planes.len(), 1, h, w);
        for (i, p) in planes.iter().enumerate() {
            if p.width() != w || p.height() != h {
                return Err(Error::Dimension(format!(
                    "plane {i} is {}x{}, expected {w}x{h}",
                    p.width(),
                    p.height()
                )));
            }
            t.plane_mut(i, 0).copy_from_slice(p.data());
        }
        Ok(t)
    }

    /// Extract one batch item as a single-channel image plane.
    pub fn to_plane(&self, ni: usize, domain: Domain) -> Result<ImagePlane> {
        if self.c != 1 {
            return Err(Error::Dimension(format!(
                "expected single channel, got {}",
                self.c
            )));
        }
        ImagePlane::new(self.w, self.h, self.plane(ni, 0).to_vec(), domain)
    }
}
