//! Seeded noise synthesis: Gaussian corruption for the noisier/noisier+
//! training pairs and multiplicative gamma speckle for synthetic validation
//! data.
//!
//! Every operation here is a pure function of its inputs and seed: the same
//! call repeated gives bit-identical output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Domain, ImagePlane};
use crate::seeds::M2_STREAM_XOR;

/// Standard deviations of the two synthetic Gaussian corruptions, in
/// rescaled-Anscombe units, plus the seed for both streams (M2 uses
/// `seed ^ M2_STREAM_XOR`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma1: f64,
    pub sigma2: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma1: f64, sigma2: f64, seed: u64) -> Result<Self> {
        for (name, s) in [("sigma1", sigma1), ("sigma2", sigma2)] {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {s}"
                )));
            }
        }
        Ok(NoiseSpec {
            sigma1,
            sigma2,
            seed,
        })
    }

    /// Same sigmas, different seed. Used to give each patch its own stream.
    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec { seed, ..*self }
    }
}

impl Default for NoiseSpec {
    /// The pair-synthesis default: both sigmas at 50.
    fn default() -> Self {
        NoiseSpec {
            sigma1: 50.0,
            sigma2: 50.0,
            seed: 0,
        }
    }
}

/// One training example: the rescaled-Anscombe real-noisy patch and its two
/// synthetically noisier versions.
///
/// In debug builds the drawn noise fields are retained so construction
/// identities (`y = x + m1`, `z = y + m2`) can be verified bit-exactly.
#[derive(Debug, Clone)]
pub struct NoisyTriple {
    pub x_ans: ImagePlane,
    pub y_noisier: ImagePlane,
    pub z_noisier_plus: ImagePlane,
    pub m1: Option<Vec<f64>>,
    pub m2: Option<Vec<f64>>,
}

/// Multiplicative gamma speckle field parameters. `apply_speckle` forces
/// `scale = 1/shape` so the field has unit mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleSpec {
    pub shape: f64,
    pub scale: f64,
    pub seed: u64,
}

impl SpeckleSpec {
    /// Unit-mean speckle with the given gamma shape.
    pub fn normalized(shape: f64, seed: u64) -> Result<Self> {
        if !shape.is_finite() || shape <= 0.0 {
            return Err(Error::Config(format!(
                "speckle shape must be > 0, got {shape}"
            )));
        }
        Ok(SpeckleSpec {
            shape,
            scale: 1.0 / shape,
            seed,
        })
    }
}

impl Default for SpeckleSpec {
    /// Moderate speckle: shape 4, unit mean.
    fn default() -> Self {
        SpeckleSpec {
            shape: 4.0,
            scale: 0.25,
            seed: 0,
        }
    }
}

/// Add i.i.d. N(0, sigma²) to every sample. Domain tag is preserved.
pub fn add_gaussian(img: &ImagePlane, sigma: f64, seed: u64) -> Result<ImagePlane> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Config(format!(
            "sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    let data: Vec<f64> = img
        .data()
        .iter()
        .map(|&v| v + normal.sample(&mut rng))
        .collect();
    ImagePlane::new(img.width(), img.height(), data, img.domain())
}

/// Draw the raw noise field N(0, sigma²) of the given length.
fn gaussian_field(len: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("validated sigma");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

/// Build the (x, y = x + M1, z = y + M2) triple for one rescaled-Anscombe
/// patch. M1 is drawn from `spec.seed`, M2 from `spec.seed ^ M2_STREAM_XOR`.
pub fn make_noisy_triple(x_ans: &ImagePlane, spec: &NoiseSpec) -> Result<NoisyTriple> {
    x_ans.require_domain(Domain::AnscombeRescaled, "make_noisy_triple")?;
    NoiseSpec::new(spec.sigma1, spec.sigma2, spec.seed)?;

    let len = x_ans.len();
    let m1 = gaussian_field(len, spec.sigma1, spec.seed);
    let m2 = gaussian_field(len, spec.sigma2, spec.seed ^ M2_STREAM_XOR);

    let y_data: Vec<f64> = x_ans.data().iter().zip(&m1).map(|(x, n)| x + n).collect();
    let z_data: Vec<f64> = y_data.iter().zip(&m2).map(|(y, n)| y + n).collect();

    let y = ImagePlane::new(x_ans.width(), x_ans.height(), y_data, x_ans.domain())?;
    let z = ImagePlane::new(x_ans.width(), x_ans.height(), z_data, x_ans.domain())?;

    let (keep_m1, keep_m2) = if cfg!(debug_assertions) {
        (Some(m1), Some(m2))
    } else {
        (None, None)
    };
    Ok(NoisyTriple {
        x_ans: x_ans.clone(),
        y_noisier: y,
        z_noisier_plus: z,
        m1: keep_m1,
        m2: keep_m2,
    })
}

/// Multiply a clean pixel-domain image by a unit-mean gamma field.
pub fn apply_speckle(clean: &ImagePlane, spec: &SpeckleSpec) -> Result<ImagePlane> {
    clean.require_domain(Domain::PixelU8Range, "apply_speckle")?;
    if !spec.shape.is_finite() || spec.shape <= 0.0 || !spec.scale.is_finite() || spec.scale <= 0.0
    {
        return Err(Error::Config(format!(
            "speckle shape and scale must be > 0, got shape {} scale {}",
            spec.shape, spec.scale
        )));
    }
    if let Some(i) = clean.data().iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "apply_speckle: negative sample at pixel index {i}"
        )));
    }
    // Unit-mean normalization: scale forced to 1/shape.
    let gamma = Gamma::new(spec.shape, 1.0 / spec.shape).expect("validated shape");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let data: Vec<f64> = clean
        .data()
        .iter()
        .map(|&v| v * gamma.sample(&mut rng))
        .collect();
    ImagePlane::new(clean.width(), clean.height(), data, Domain::PixelU8Range)
}
