//! Monte-Carlo probe of the conditional-expectation identity behind the
//! noisier-pair training target.
//!
//! For scalar x drawn from a prior, y = x + M1 and z = y + M2, the identity
//! E[Y|Z] − E[X|Z] = E[M1|Z] holds exactly; the training scheme's leap is
//! treating E[M1|Z] as negligible. The probe bins samples by z, reports the
//! three binned conditional means, and measures how large the neglected
//! E[M1|Z] term actually is. With a Gaussian prior it has the closed form
//! σ1²·(z − μ0)/(σ0² + σ1² + σ2²), which the tests check against.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::seeds::M2_STREAM_XOR;

/// Prior over the clean scalar signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    /// Uniform over the 8-bit pixel range [0, 255].
    UniformPixel,
    /// Gaussian with the given mean and standard deviation.
    GaussianScalar { mu0: f64, sigma0: f64 },
}

/// One z-bin of the probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeBin {
    /// Geometric center of the bin.
    pub bin_center: f64,
    /// Mean of the z samples that fell in the bin.
    pub mean_z: f64,
    pub count: usize,
    pub e_y_given_z: f64,
    pub e_x_given_z: f64,
    pub e_m1_given_z: f64,
    /// Standard error of the binned E[M1|Z] estimate.
    pub stderr: f64,
    /// False when the bin holds fewer than 100 samples.
    pub reliable: bool,
}

/// Binned conditional means from one probe run.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub bins: Vec<ProbeBin>,
    pub n_samples: usize,
    pub spec: NoiseSpec,
}

impl ProbeReport {
    /// CSV with one row per bin: bin_center, n, E_y, E_x, E_m1, stderr.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "bin_center,n,E_y,E_x,E_m1,stderr")?;
        for b in &self.bins {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                b.bin_center, b.count, b.e_y_given_z, b.e_x_given_z, b.e_m1_given_z, b.stderr
            )?;
        }
        Ok(())
    }
}

/// Closed-form slope of E[M1|Z = μ0 + δ] / δ under a Gaussian prior.
pub fn gaussian_m1_slope(sigma0: f64, spec: &NoiseSpec) -> f64 {
    let v0 = sigma0 * sigma0;
    let v1 = spec.sigma1 * spec.sigma1;
    let v2 = spec.sigma2 * spec.sigma2;
    v1 / (v0 + v1 + v2)
}

/// Simulate the scalar chain x → y → z and report binned conditional means.
pub fn conditional_expectation_probe(
    prior: Prior,
    spec: &NoiseSpec,
    n_samples: usize,
    n_bins: usize,
) -> Result<ProbeReport> {
    if n_samples < 100_000 {
        return Err(Error::Config(format!(
            "probe needs at least 1e5 samples, got {n_samples}"
        )));
    }
    if n_bins < 10 {
        return Err(Error::Config(format!(
            "probe needs at least 10 bins, got {n_bins}"
        )));
    }

    let mut rng_x = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rng_m1 = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let mut rng_m2 = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1) ^ M2_STREAM_XOR);

    let normal1 = (spec.sigma1 > 0.0).then(|| Normal::new(0.0, spec.sigma1).unwrap());
    let normal2 = (spec.sigma2 > 0.0).then(|| Normal::new(0.0, spec.sigma2).unwrap());

    let mut xs = Vec::with_capacity(n_samples);
    let mut m1s = Vec::with_capacity(n_samples);
    let mut zs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let x = match prior {
            Prior::UniformPixel => rng_x.random_range(0.0..255.0),
            Prior::GaussianScalar { mu0, sigma0 } => {
                mu0 + sigma0 * rng_x.sample::<f64, _>(rand_distr::StandardNormal)
            }
        };
        let m1 = normal1.map_or(0.0, |n| n.sample(&mut rng_m1));
        let m2 = normal2.map_or(0.0, |n| n.sample(&mut rng_m2));
        xs.push(x);
        m1s.push(m1);
        zs.push(x + m1 + m2);
    }

    let z_min = zs.iter().cloned().fold(f64::INFINITY, f64::min);
    let z_max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (z_max - z_min) / n_bins as f64;
    if width <= 0.0 {
        return Err(Error::Numeric("degenerate z distribution".into()));
    }

    let mut count = vec![0usize; n_bins];
    let mut sum_z = vec![0.0; n_bins];
    let mut sum_x = vec![0.0; n_bins];
    let mut sum_m1 = vec![0.0; n_bins];
    let mut sum_m1_sq = vec![0.0; n_bins];
    for i in 0..n_samples {
        let mut b = ((zs[i] - z_min) / width) as usize;
        if b >= n_bins {
            b = n_bins - 1;
        }
        count[b] += 1;
        sum_z[b] += zs[i];
        sum_x[b] += xs[i];
        sum_m1[b] += m1s[i];
        sum_m1_sq[b] += m1s[i] * m1s[i];
    }

    let bins = (0..n_bins)
        .map(|b| {
            let n = count[b];
            let nf = n as f64;
            let center = z_min + (b as f64 + 0.5) * width;
            if n == 0 {
                return ProbeBin {
                    bin_center: center,
                    mean_z: center,
                    count: 0,
                    e_y_given_z: 0.0,
                    e_x_given_z: 0.0,
                    e_m1_given_z: 0.0,
                    stderr: f64::INFINITY,
                    reliable: false,
                };
            }
            let e_x = sum_x[b] / nf;
            let e_m1 = sum_m1[b] / nf;
            let var_m1 = if n > 1 {
                (sum_m1_sq[b] - nf * e_m1 * e_m1) / (nf - 1.0)
            } else {
                0.0
            };
            ProbeBin {
                bin_center: center,
                mean_z: sum_z[b] / nf,
                count: n,
                e_y_given_z: e_x + e_m1,
                e_x_given_z: e_x,
                e_m1_given_z: e_m1,
                stderr: (var_m1.max(0.0) / nf).sqrt(),
                reliable: n >= 100,
            }
        })
        .collect();

    Ok(ProbeReport {
        bins,
        n_samples,
        spec: *spec,
    })
}
