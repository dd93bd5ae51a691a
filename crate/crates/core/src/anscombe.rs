//! Anscombe variance-stabilizing transform and its inverses.
//!
//! The forward map x → 2·sqrt(x + 3/8) turns Poisson-distributed counts
//! into approximately unit-variance Gaussian samples, which is what lets an
//! additive-Gaussian training scheme operate on multiplicative speckle.
//! Three inverses are provided: the exact algebraic inverse of the forward
//! formula, the first-order asymptotic inverse, and the closed-form
//! approximation of the exact unbiased inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Domain, ImagePlane};

/// Inverse-transform variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseMode {
    /// (y/2)² − 3/8, the exact inverse of the forward formula.
    Algebraic,
    /// (y/2)² − 1/8, first-order bias correction.
    Asymptotic,
    /// Closed-form approximation of the exact unbiased inverse.
    #[default]
    ClosedFormUnbiased,
}

/// Forward transform: each sample becomes 2·sqrt(x + 3/8).
///
/// Requires a `PixelU8Range` plane with nonnegative samples; the output is
/// tagged `Anscombe`.
pub fn anscombe_forward(img: &ImagePlane) -> Result<ImagePlane> {
    img.require_domain(Domain::PixelU8Range, "anscombe_forward")?;
    if let Some(i) = img.data().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "anscombe_forward: negative sample {} at pixel index {i}",
            img.data()[i]
        )));
    }
    img.map(Domain::Anscombe, |x| 2.0 * (x + 0.375).sqrt())
}

/// Inverse transform in the selected mode. Output is tagged `PixelU8Range`
/// but is not clamped; clamping happens on image export only.
pub fn anscombe_inverse(img: &ImagePlane, mode: InverseMode) -> Result<ImagePlane> {
    img.require_domain(Domain::Anscombe, "anscombe_inverse")?;
    match mode {
        InverseMode::Algebraic => img.map(Domain::PixelU8Range, |y| {
            let t = y / 2.0;
            t * t - 0.375
        }),
        InverseMode::Asymptotic => img.map(Domain::PixelU8Range, |y| {
            let t = y / 2.0;
            t * t - 0.125
        }),
        InverseMode::ClosedFormUnbiased => {
            if let Some(i) = img.data().iter().position(|&v| v <= 0.0) {
                return Err(Error::Domain(format!(
                    "anscombe_inverse (closed-form unbiased): nonpositive sample {} at pixel index {i}",
                    img.data()[i]
                )));
            }
            img.map(Domain::PixelU8Range, closed_form_unbiased)
        }
    }
}

/// Closed-form approximation of the exact unbiased inverse:
/// (y/2)² + (1/4)·sqrt(3/2)·y⁻¹ − (11/8)·y⁻² + (5/8)·sqrt(3/2)·y⁻³ − 1/8.
fn closed_form_unbiased(y: f64) -> f64 {
    let s32 = (1.5f64).sqrt();
    let t = y / 2.0;
    t * t + 0.25 * s32 / y - 11.0 / 8.0 / (y * y) + 0.625 * s32 / (y * y * y) - 0.125
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Poisson};

    fn constant(v: f64, domain: Domain) -> ImagePlane {
        ImagePlane::constant(4, 3, v, domain).unwrap()
    }

    #[test]
    fn forward_of_zero_is_two_sqrt_three_eighths() {
        let out = anscombe_forward(&constant(0.0, Domain::PixelU8Range)).unwrap();
        let expected = 2.0 * (0.375f64).sqrt(); // ≈ 1.224745
        for &v in out.data() {
            assert!((v - expected).abs() < 1e-12);
        }
        assert!((expected - 1.224745).abs() < 1e-6);
        assert_eq!(out.domain(), Domain::Anscombe);
    }

    #[test]
    fn forward_of_ten_matches_scalar_evaluation() {
        let out = anscombe_forward(&constant(10.0, Domain::PixelU8Range)).unwrap();
        let expected = 2.0 * (10.375f64).sqrt(); // ≈ 6.442049
        assert!((out.data()[0] - expected).abs() < 1e-12);
        assert!((expected - 6.442049).abs() < 1e-6);
    }

    #[test]
    fn forward_rejects_negative_sample_with_index() {
        let img = ImagePlane::new(3, 1, vec![1.0, -0.5, 2.0], Domain::PixelU8Range).unwrap();
        match anscombe_forward(&img) {
            Err(Error::Domain(msg)) => assert!(msg.contains("index 1"), "{msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn forward_rejects_wrong_domain() {
        let img = constant(1.0, Domain::Anscombe);
        assert!(anscombe_forward(&img).is_err());
    }

    #[test]
    fn algebraic_round_trip_is_exact_on_u8_lattice() {
        let img = ImagePlane::new(
            256,
            1,
            (0..256).map(|v| v as f64).collect(),
            Domain::PixelU8Range,
        )
        .unwrap();
        let back = anscombe_inverse(&anscombe_forward(&img).unwrap(), InverseMode::Algebraic)
            .unwrap();
        assert!(back.max_abs_diff(&img).unwrap() < 1e-9);
        assert_eq!(back.domain(), Domain::PixelU8Range);
    }

    #[test]
    fn asymptotic_inverse_of_lower_endpoint_is_quarter() {
        let lo = 2.0 * (0.375f64).sqrt();
        let out = anscombe_inverse(&constant(lo, Domain::Anscombe), InverseMode::Asymptotic)
            .unwrap();
        for &v in out.data() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn unbiased_inverse_rejects_nonpositive() {
        let img = ImagePlane::new(2, 1, vec![1.0, 0.0], Domain::Anscombe).unwrap();
        assert!(matches!(
            anscombe_inverse(&img, InverseMode::ClosedFormUnbiased),
            Err(Error::Domain(_))
        ));
    }

    /// Monte-Carlo oracle: variance of the transformed Poisson(20) draws is
    /// close to 1, and the closed-form unbiased inverse recovers the mean.
    #[test]
    fn poisson_stabilization_and_unbiased_inverse() {
        let n = 1_000_000usize;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);

        for (lambda, var_lo, var_hi) in [(20.0, 0.9, 1.1), (10.0, 0.9, 1.1)] {
            let pois = Poisson::new(lambda).unwrap();
            let draws: Vec<f64> = (0..n).map(|_| pois.sample(&mut rng)).collect();
            let img = ImagePlane::new(n, 1, draws, Domain::PixelU8Range).unwrap();
            let t = anscombe_forward(&img).unwrap();
            let mean = t.mean();
            let var =
                t.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
            assert!(
                var > var_lo && var < var_hi,
                "stabilized variance {var} out of [{var_lo}, {var_hi}] at lambda {lambda}"
            );
        }

        // Unbiasedness at lambda = 30: the recovered mean is within 1%.
        let lambda = 30.0;
        let pois = Poisson::new(lambda).unwrap();
        let draws: Vec<f64> = (0..n).map(|_| pois.sample(&mut rng)).collect();
        let img = ImagePlane::new(n, 1, draws, Domain::PixelU8Range).unwrap();
        let inv = anscombe_inverse(
            &anscombe_forward(&img).unwrap(),
            InverseMode::ClosedFormUnbiased,
        )
        .unwrap();
        let recovered = inv.mean();
        assert!(
            (recovered - lambda).abs() / lambda < 0.01,
            "recovered mean {recovered} deviates more than 1% from {lambda}"
        );
    }
}
