//! PSNR and SSIM image quality metrics.
//!
//! SSIM is computed over the whole image as a single window, matching how
//! the baseline comparison uses it; a sliding Gaussian window is out of
//! scope here.

use crate::error::{Error, Result};
use crate::image::{check_same_dims, ImagePlane};

/// One (PSNR, SSIM) measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPair {
    /// Peak signal-to-noise ratio in decibels; `f64::INFINITY` flags a
    /// zero-MSE (identical) pair.
    pub psnr_db: f64,
    /// Structural similarity in [-1, 1].
    pub ssim: f64,
}

/// 10·log10(max_val² / MSE). Returns `f64::INFINITY` when MSE is zero.
pub fn psnr(reference: &ImagePlane, test: &ImagePlane, max_val: f64) -> Result<f64> {
    check_same_dims(reference, test)?;
    if max_val <= 0.0 {
        return Err(Error::Config(format!("max_val must be > 0, got {max_val}")));
    }
    let n = reference.len() as f64;
    let mse = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

/// Whole-image single-window SSIM with C1 = (0.01·max_val)² and
/// C2 = (0.03·max_val)².
pub fn ssim(reference: &ImagePlane, test: &ImagePlane, max_val: f64) -> Result<f64> {
    check_same_dims(reference, test)?;
    if max_val <= 0.0 {
        return Err(Error::Config(format!("max_val must be > 0, got {max_val}")));
    }
    let n = reference.len() as f64;
    let mu_x = reference.mean();
    let mu_y = test.mean();
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    let mut cov = 0.0;
    for (&a, &b) in reference.data().iter().zip(test.data()) {
        let dx = a - mu_x;
        let dy = b - mu_y;
        var_x += dx * dx;
        var_y += dy * dy;
        cov += dx * dy;
    }
    var_x /= n;
    var_y /= n;
    cov /= n;
    let c1 = (0.01 * max_val) * (0.01 * max_val);
    let c2 = (0.03 * max_val) * (0.03 * max_val);
    let num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
    let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
    Ok(num / den)
}

/// Convenience: both metrics at once.
pub fn metric_pair(reference: &ImagePlane, test: &ImagePlane, max_val: f64) -> Result<MetricPair> {
    Ok(MetricPair {
        psnr_db: psnr(reference, test, max_val)?,
        ssim: ssim(reference, test, max_val)?,
    })
}

/// Mean and sample standard deviation (n−1 denominator; 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Domain;

    fn plane(vals: Vec<f64>) -> ImagePlane {
        let w = vals.len();
        ImagePlane::new(w, 1, vals, Domain::PixelU8Range).unwrap()
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let x = plane(vec![3.0, 7.0, 11.0]);
        assert!(psnr(&x, &x, 255.0).unwrap().is_infinite());
    }

    #[test]
    fn psnr_zero_db_when_mse_equals_max_squared() {
        let a = ImagePlane::constant(8, 8, 0.0, Domain::PixelU8Range).unwrap();
        let b = ImagePlane::constant(8, 8, 255.0, Domain::PixelU8Range).unwrap();
        assert!((psnr(&a, &b, 255.0).unwrap() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_twenty_db_case_is_exact() {
        let a = ImagePlane::constant(8, 8, 0.0, Domain::PixelU8Range).unwrap();
        let b = ImagePlane::constant(8, 8, 25.5, Domain::PixelU8Range).unwrap();
        assert!((psnr(&a, &b, 255.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_rejects_dimension_mismatch() {
        let a = ImagePlane::constant(4, 4, 0.0, Domain::PixelU8Range).unwrap();
        let b = ImagePlane::constant(4, 5, 0.0, Domain::PixelU8Range).unwrap();
        assert!(psnr(&a, &b, 255.0).is_err());
    }

    /// PSNR strictly decreases as the perturbation scale grows.
    #[test]
    fn psnr_is_monotone_in_mse() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let base = ImagePlane::from_fn(16, 16, Domain::PixelU8Range, |_, _| {
            rng.random_range(0.0..255.0)
        })
        .unwrap();
        let noise: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for scale in [1.0, 2.0, 5.0, 10.0, 25.0] {
            let test = ImagePlane::new(
                16,
                16,
                base.data()
                    .iter()
                    .zip(&noise)
                    .map(|(v, n)| v + scale * n)
                    .collect(),
                Domain::PixelU8Range,
            )
            .unwrap();
            let p = psnr(&base, &test, 255.0).unwrap();
            assert!(p < last, "psnr did not decrease: {p} >= {last}");
            last = p;
        }
    }

    #[test]
    fn ssim_self_is_exactly_one() {
        let x = plane(vec![1.0, 5.0, 9.0, 200.0]);
        assert_eq!(ssim(&x, &x, 255.0).unwrap(), 1.0);
    }

    #[test]
    fn ssim_is_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a = ImagePlane::from_fn(9, 7, Domain::PixelU8Range, |_, _| {
            rng.random_range(0.0..255.0)
        })
        .unwrap();
        let b = ImagePlane::from_fn(9, 7, Domain::PixelU8Range, |_, _| {
            rng.random_range(0.0..255.0)
        })
        .unwrap();
        let ab = ssim(&a, &b, 255.0).unwrap();
        let ba = ssim(&b, &a, 255.0).unwrap();
        assert!((ab - ba).abs() < 1e-15);
    }

    /// Constant 100 vs constant 200: variances vanish, so the second factor
    /// is 1 and SSIM = (2·100·200 + C1)/(100² + 200² + C1).
    #[test]
    fn constant_vs_constant_matches_hand_formula() {
        let a = ImagePlane::constant(6, 6, 100.0, Domain::PixelU8Range).unwrap();
        let b = ImagePlane::constant(6, 6, 200.0, Domain::PixelU8Range).unwrap();
        let c1 = 6.5025;
        let expected = (2.0 * 100.0 * 200.0 + c1) / (100.0 * 100.0 + 200.0 * 200.0 + c1);
        let got = ssim(&a, &b, 255.0).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        assert!((got - 0.8001).abs() < 1e-4);
    }

    #[test]
    fn mean_std_recovers_hand_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let (m1, s1) = mean_std(&[7.0]);
        assert_eq!((m1, s1), (7.0, 0.0));
    }
}
