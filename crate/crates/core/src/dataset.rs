//! Patch extraction, pair synthesis and the deterministic dataset split.
//!
//! `build_dataset` turns a manifest into aligned training triples: each
//! patch is cropped from the real-noisy image, Anscombe-transformed,
//! rescaled onto [0, 255] and corrupted into its noisier / noisier+
//! versions. The split into train/val/test is a seeded shuffle of patch
//! identities, and the whole dataset is summarized by a content hash so
//! reruns can be compared bit-for-bit.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anscombe::anscombe_forward;
use crate::error::{Error, Result};
use crate::image::{anscombe_rescale_forward, check_same_dims, Domain, ImagePlane};
use crate::imgio::read_image;
use crate::manifest::DatasetManifest;
use crate::noise::{make_noisy_triple, NoiseSpec, NoisyTriple};
use crate::seeds::derive;

/// Sub-stream salt separating the split shuffle from patch extraction.
const SPLIT_SALT: u64 = 0x53_504C_4954; // "SPLIT"

/// Which splits keep the aligned clean patch (when the manifest has one).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CleanRetention {
    /// Clean patches only on the test split (evaluation).
    #[default]
    TestOnly,
    /// Clean patches on every split (needed for supervised training).
    AllSplits,
}

/// Patch extraction and split configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchConfig {
    pub patch_size: usize,
    pub total_patches: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub extraction_seed: u64,
    #[serde(default)]
    pub retain_clean: CleanRetention,
}

impl Default for PatchConfig {
    fn default() -> Self {
        PatchConfig {
            patch_size: 128,
            total_patches: 1700,
            n_train: 1500,
            n_val: 100,
            n_test: 100,
            extraction_seed: 0,
            retain_clean: CleanRetention::TestOnly,
        }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be >= 1".into()));
        }
        if self.total_patches == 0 {
            return Err(Error::Config("total_patches must be >= 1".into()));
        }
        if self.n_train + self.n_val + self.n_test != self.total_patches {
            return Err(Error::Config(format!(
                "split {}+{}+{} does not sum to total_patches {}",
                self.n_train, self.n_val, self.n_test, self.total_patches
            )));
        }
        Ok(())
    }
}

/// One patch with its provenance.
#[derive(Debug, Clone)]
pub struct PatchEntry {
    pub triple: NoisyTriple,
    /// Aligned clean patch in the pixel domain, when the source has one and
    /// the retention policy keeps it for this split.
    pub clean: Option<ImagePlane>,
    pub source_id: String,
    /// (row, col) of the patch's top-left corner in the source image.
    pub origin: (usize, usize),
}

/// The materialized dataset: disjoint splits plus a content digest.
#[derive(Debug, Clone)]
pub struct PatchDataset {
    pub train: Vec<PatchEntry>,
    pub val: Vec<PatchEntry>,
    pub test: Vec<PatchEntry>,
    pub patch_config: PatchConfig,
    pub noise_spec: NoiseSpec,
    digest: String,
}

impl PatchDataset {
    /// Hex SHA-256 over the full dataset content and its configuration.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Assemble a dataset from pre-built splits, computing its digest.
    /// Counts in `pcfg` are overridden by the actual split sizes.
    pub fn from_parts(
        train: Vec<PatchEntry>,
        val: Vec<PatchEntry>,
        test: Vec<PatchEntry>,
        mut pcfg: PatchConfig,
        nspec: NoiseSpec,
    ) -> Self {
        pcfg.n_train = train.len();
        pcfg.n_val = val.len();
        pcfg.n_test = test.len();
        pcfg.total_patches = train.len() + val.len() + test.len();
        let digest = compute_digest(&train, &val, &test, &pcfg, &nspec);
        PatchDataset {
            train,
            val,
            test,
            patch_config: pcfg,
            noise_spec: nspec,
            digest,
        }
    }
}

/// Spread `total` patches over `n_images` as evenly as possible; the
/// remainder goes to the earliest image ids in sorted order.
pub fn allocate_counts(total: usize, n_images: usize) -> Vec<usize> {
    let base = total / n_images;
    let rem = total % n_images;
    (0..n_images)
        .map(|i| base + usize::from(i < rem))
        .collect()
}

/// Draw `count` distinct patch origins uniformly at random.
pub fn draw_origins(
    width: usize,
    height: usize,
    patch_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if width < patch_size || height < patch_size {
        return Err(Error::Dimension(format!(
            "image {width}x{height} smaller than patch size {patch_size}"
        )));
    }
    let max_row = height - patch_size;
    let max_col = width - patch_size;
    let possible = (max_row + 1) * (max_col + 1);
    if count > possible {
        return Err(Error::Config(format!(
            "cannot draw {count} distinct origins: only {possible} available"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if count * 4 >= possible {
        // Dense request: enumerate and shuffle instead of rejecting forever.
        let mut all: Vec<(usize, usize)> = (0..=max_row)
            .flat_map(|r| (0..=max_col).map(move |c| (r, c)))
            .collect();
        all.shuffle(&mut rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut seen = HashSet::with_capacity(count);
    let mut origins = Vec::with_capacity(count);
    while origins.len() < count {
        let cand = (rng.random_range(0..=max_row), rng.random_range(0..=max_col));
        if seen.insert(cand) {
            origins.push(cand);
        }
    }
    Ok(origins)
}

/// Extract `per_image_count` distinct random patches from one image.
pub fn extract_patches(
    img: &ImagePlane,
    cfg: &PatchConfig,
    per_image_count: usize,
    seed: u64,
) -> Result<Vec<(ImagePlane, (usize, usize))>> {
    let origins = draw_origins(img.width(), img.height(), cfg.patch_size, per_image_count, seed)?;
    origins
        .into_iter()
        .map(|(r, c)| Ok((img.crop_square(r, c, cfg.patch_size)?, (r, c))))
        .collect()
}

struct RawPatch {
    triple: NoisyTriple,
    clean: Option<ImagePlane>,
    source_id: String,
    origin: (usize, usize),
}

/// Build the full dataset from a manifest.
pub fn build_dataset(
    manifest: &DatasetManifest,
    pcfg: &PatchConfig,
    nspec: &NoiseSpec,
) -> Result<PatchDataset> {
    pcfg.validate()?;
    NoiseSpec::new(nspec.sigma1, nspec.sigma2, nspec.seed)?;

    let entries = manifest.sorted_entries();
    let counts = allocate_counts(pcfg.total_patches, entries.len());

    let mut raw: Vec<RawPatch> = Vec::with_capacity(pcfg.total_patches);
    let mut global_index: u64 = 0;
    for (i, entry) in entries.iter().enumerate() {
        let noisy = read_image(&entry.noisy_path)
            .map_err(|e| Error::Data(format!("image {}: {e}", entry.image_id)))?;
        let clean = match &entry.clean_path {
            Some(p) => {
                let c = read_image(p)
                    .map_err(|e| Error::Data(format!("image {}: {e}", entry.image_id)))?;
                check_same_dims(&noisy, &c).map_err(|e| {
                    Error::Data(format!(
                        "image {}: clean/noisy dimension mismatch: {e}",
                        entry.image_id
                    ))
                })?;
                Some(c)
            }
            None => None,
        };

        let patches = extract_patches(&noisy, pcfg, counts[i], derive(pcfg.extraction_seed, i as u64))
            .map_err(|e| Error::Data(format!("image {}: {e}", entry.image_id)))?;
        for (patch, origin) in patches {
            let x_ans = anscombe_rescale_forward(&anscombe_forward(&patch)?)?;
            let triple = make_noisy_triple(&x_ans, &nspec.with_seed(derive(nspec.seed, global_index)))?;
            let clean_patch = clean
                .as_ref()
                .map(|c| c.crop_square(origin.0, origin.1, pcfg.patch_size))
                .transpose()?;
            raw.push(RawPatch {
                triple,
                clean: clean_patch,
                source_id: entry.image_id.clone(),
                origin,
            });
            global_index += 1;
        }
    }

    // Seeded shuffle of patch identities, then contiguous split.
    let mut order: Vec<usize> = (0..raw.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive(pcfg.extraction_seed, SPLIT_SALT));
    order.shuffle(&mut rng);

    let mut train = Vec::with_capacity(pcfg.n_train);
    let mut val = Vec::with_capacity(pcfg.n_val);
    let mut test = Vec::with_capacity(pcfg.n_test);
    // Take in reverse-safe order: map indices to slots first.
    let mut slot = vec![2usize; raw.len()];
    for (pos, &idx) in order.iter().enumerate() {
        slot[idx] = if pos < pcfg.n_train {
            0
        } else if pos < pcfg.n_train + pcfg.n_val {
            1
        } else {
            2
        };
    }
    for (idx, rp) in raw.into_iter().enumerate() {
        let keep_clean = match (pcfg.retain_clean, slot[idx]) {
            (CleanRetention::AllSplits, _) | (CleanRetention::TestOnly, 2) => rp.clean,
            _ => None,
        };
        let entry = PatchEntry {
            triple: rp.triple,
            clean: keep_clean,
            source_id: rp.source_id,
            origin: rp.origin,
        };
        match slot[idx] {
            0 => train.push(entry),
            1 => val.push(entry),
            _ => test.push(entry),
        }
    }

    let digest = compute_digest(&train, &val, &test, pcfg, nspec);
    Ok(PatchDataset {
        train,
        val,
        test,
        patch_config: *pcfg,
        noise_spec: *nspec,
        digest,
    })
}

fn hash_plane(h: &mut Sha256, img: &ImagePlane) {
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    for v in img.data() {
        h.update(v.to_le_bytes());
    }
}

fn compute_digest(
    train: &[PatchEntry],
    val: &[PatchEntry],
    test: &[PatchEntry],
    pcfg: &PatchConfig,
    nspec: &NoiseSpec,
) -> String {
    let mut h = Sha256::new();
    h.update(b"despeckle-dataset-v1");
    h.update((pcfg.patch_size as u64).to_le_bytes());
    h.update((pcfg.total_patches as u64).to_le_bytes());
    h.update((pcfg.n_train as u64).to_le_bytes());
    h.update((pcfg.n_val as u64).to_le_bytes());
    h.update((pcfg.n_test as u64).to_le_bytes());
    h.update(pcfg.extraction_seed.to_le_bytes());
    h.update(nspec.sigma1.to_le_bytes());
    h.update(nspec.sigma2.to_le_bytes());
    h.update(nspec.seed.to_le_bytes());
    for (tag, split) in [(b"trn", train), (b"val", val), (b"tst", test)] {
        h.update(tag);
        h.update((split.len() as u64).to_le_bytes());
        for e in split {
            h.update((e.source_id.len() as u64).to_le_bytes());
            h.update(e.source_id.as_bytes());
            h.update((e.origin.0 as u64).to_le_bytes());
            h.update((e.origin.1 as u64).to_le_bytes());
            hash_plane(&mut h, &e.triple.x_ans);
            hash_plane(&mut h, &e.triple.y_noisier);
            hash_plane(&mut h, &e.triple.z_noisier_plus);
            match &e.clean {
                Some(c) => {
                    h.update([1u8]);
                    hash_plane(&mut h, c);
                }
                None => h.update([0u8]),
            }
        }
    }
    hex_string(&h.finalize())
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// --- Binary container ---------------------------------------------------

const DATASET_MAGIC: &[u8; 8] = b"DSPKDAT1";

fn write_plane(out: &mut Vec<u8>, img: &ImagePlane) {
    out.extend_from_slice(&(img.width() as u64).to_le_bytes());
    out.extend_from_slice(&(img.height() as u64).to_le_bytes());
    out.push(domain_code(img.domain()));
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn domain_code(d: Domain) -> u8 {
    match d {
        Domain::PixelU8Range => 0,
        Domain::Anscombe => 1,
        Domain::AnscombeRescaled => 2,
        Domain::Arbitrary => 3,
    }
}

fn domain_from_code(c: u8) -> Result<Domain> {
    Ok(match c {
        0 => Domain::PixelU8Range,
        1 => Domain::Anscombe,
        2 => Domain::AnscombeRescaled,
        3 => Domain::Arbitrary,
        other => return Err(Error::Data(format!("unknown domain code {other}"))),
    })
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Data("truncated dataset file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn plane(&mut self) -> Result<ImagePlane> {
        let w = self.u64()? as usize;
        let h = self.u64()? as usize;
        let domain = domain_from_code(self.u8()?)?;
        if w.checked_mul(h).is_none() || w * h > 1 << 32 {
            return Err(Error::Data(format!("implausible plane size {w}x{h}")));
        }
        let raw = self.take(w * h * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ImagePlane::new(w, h, data, domain)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    patch_config: PatchConfig,
    noise_spec: NoiseSpec,
    digest: String,
}

/// Serialize the dataset to its versioned binary container.
pub fn save_dataset(ds: &PatchDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&DatasetHeader {
        patch_config: ds.patch_config,
        noise_spec: ds.noise_spec,
        digest: ds.digest.clone(),
    })
    .expect("header serializes");

    let mut body = Vec::new();
    body.extend_from_slice(DATASET_MAGIC);
    body.extend_from_slice(&(header.len() as u64).to_le_bytes());
    body.extend_from_slice(&header);
    for split in [&ds.train, &ds.val, &ds.test] {
        body.extend_from_slice(&(split.len() as u64).to_le_bytes());
        for e in split {
            body.extend_from_slice(&(e.source_id.len() as u64).to_le_bytes());
            body.extend_from_slice(e.source_id.as_bytes());
            body.extend_from_slice(&(e.origin.0 as u64).to_le_bytes());
            body.extend_from_slice(&(e.origin.1 as u64).to_le_bytes());
            write_plane(&mut body, &e.triple.x_ans);
            write_plane(&mut body, &e.triple.y_noisier);
            write_plane(&mut body, &e.triple.z_noisier_plus);
            match &e.clean {
                Some(c) => {
                    body.push(1);
                    write_plane(&mut body, c);
                }
                None => body.push(0),
            }
        }
    }
    let checksum = Sha256::digest(&body);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&body).map_err(|e| Error::io(path, e))?;
    f.write_all(&checksum).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load a dataset container, verifying its checksum.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<PatchDataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < DATASET_MAGIC.len() + 32 {
        return Err(Error::Data(format!(
            "{}: truncated dataset file",
            path.display()
        )));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(Error::Data(format!(
            "{}: dataset checksum mismatch",
            path.display()
        )));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(8)? != DATASET_MAGIC {
        return Err(Error::Data(format!(
            "{}: not a dataset file (bad magic)",
            path.display()
        )));
    }
    let hlen = r.u64()? as usize;
    let header: DatasetHeader = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::Data(format!("{}: bad dataset header: {e}", path.display())))?;

    let mut splits = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = r.u64()? as usize;
        let mut split = Vec::with_capacity(n);
        for _ in 0..n {
            let idlen = r.u64()? as usize;
            let source_id = String::from_utf8(r.take(idlen)?.to_vec())
                .map_err(|_| Error::Data("invalid utf-8 in source id".into()))?;
            let origin = (r.u64()? as usize, r.u64()? as usize);
            let x_ans = r.plane()?;
            let y = r.plane()?;
            let z = r.plane()?;
            let clean = if r.u8()? == 1 { Some(r.plane()?) } else { None };
            split.push(PatchEntry {
                triple: NoisyTriple {
                    x_ans,
                    y_noisier: y,
                    z_noisier_plus: z,
                    m1: None,
                    m2: None,
                },
                clean,
                source_id,
                origin,
            });
        }
        splits.push(split);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(PatchDataset {
        train,
        val,
        test,
        patch_config: header.patch_config,
        noise_spec: header.noise_spec,
        digest: header.digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::write_image;
    use crate::manifest::load_manifest;
    use std::fs;

    #[test]
    fn allocation_is_even_with_remainder_first() {
        assert_eq!(allocate_counts(1700, 28).iter().sum::<usize>(), 1700);
        let c = allocate_counts(1700, 28);
        assert_eq!(c[0], 61); // 1700 = 60*28 + 20
        assert_eq!(c[19], 61);
        assert_eq!(c[20], 60);
        assert_eq!(allocate_counts(10, 3), vec![4, 3, 3]);
    }

    #[test]
    fn origins_respect_bounds_and_count() {
        // 900 wide, 450 tall, patch 128: rows in [0, 322], cols in [0, 772].
        let origins = draw_origins(900, 450, 128, 61, 9).unwrap();
        assert_eq!(origins.len(), 61);
        let distinct: HashSet<_> = origins.iter().collect();
        assert_eq!(distinct.len(), 61);
        for &(r, c) in &origins {
            assert!(r <= 322, "row {r}");
            assert!(c <= 772, "col {c}");
        }
    }

    #[test]
    fn single_origin_when_patch_fills_image() {
        let origins = draw_origins(64, 64, 64, 1, 0).unwrap();
        assert_eq!(origins, vec![(0, 0)]);
        match draw_origins(64, 64, 64, 2, 0) {
            Err(Error::Config(msg)) => assert!(msg.contains("2 distinct origins"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn extraction_is_deterministic_per_seed() {
        let a = draw_origins(300, 200, 32, 40, 77).unwrap();
        let b = draw_origins(300, 200, 32, 40, 77).unwrap();
        let c = draw_origins(300, 200, 32, 40, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn image_smaller_than_patch_is_rejected() {
        let img = ImagePlane::constant(16, 16, 0.0, Domain::PixelU8Range).unwrap();
        let cfg = PatchConfig {
            patch_size: 32,
            ..PatchConfig::default()
        };
        assert!(extract_patches(&img, &cfg, 1, 0).is_err());
    }

    /// Write a small synthetic corpus and return its manifest path.
    fn synthetic_manifest(dir: &Path, n_images: usize, with_clean: bool) -> std::path::PathBuf {
        use rand::{Rng, SeedableRng};
        let mut text = String::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..n_images {
            let clean = ImagePlane::from_fn(96, 80, Domain::PixelU8Range, |r, c| {
                (((r * 2 + c) % 256) as f64 + i as f64 * 3.0).min(255.0)
            })
            .unwrap();
            let noisy = ImagePlane::from_fn(96, 80, Domain::PixelU8Range, |r, c| {
                (clean.get(r, c) + rng.random_range(-20.0..20.0)).clamp(0.0, 255.0)
            })
            .unwrap();
            let noisy_name = format!("n{i:02}.png");
            write_image(&noisy, &dir.join(&noisy_name)).unwrap();
            if with_clean {
                let clean_name = format!("c{i:02}.png");
                write_image(&clean, &dir.join(&clean_name)).unwrap();
                text.push_str(&format!(
                    "entry id=img{i:02} noisy={noisy_name} clean={clean_name}\n"
                ));
            } else {
                text.push_str(&format!("entry id=img{i:02} noisy={noisy_name}\n"));
            }
        }
        let mpath = dir.join("manifest.txt");
        fs::write(&mpath, text).unwrap();
        mpath
    }

    fn small_config() -> PatchConfig {
        PatchConfig {
            patch_size: 16,
            total_patches: 50,
            n_train: 40,
            n_val: 5,
            n_test: 5,
            extraction_seed: 3,
            retain_clean: CleanRetention::TestOnly,
        }
    }

    #[test]
    fn split_cardinalities_and_domains() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = synthetic_manifest(dir.path(), 4, true);
        let manifest = load_manifest(&mpath).unwrap();
        let ds = build_dataset(&manifest, &small_config(), &NoiseSpec::new(50.0, 50.0, 7).unwrap())
            .unwrap();
        assert_eq!(ds.train.len(), 40);
        assert_eq!(ds.val.len(), 5);
        assert_eq!(ds.test.len(), 5);
        for e in ds.train.iter().chain(&ds.val).chain(&ds.test) {
            assert_eq!(e.triple.x_ans.domain(), Domain::AnscombeRescaled);
            assert_eq!(e.triple.z_noisier_plus.domain(), Domain::AnscombeRescaled);
        }
        // TestOnly retention: clean only on test entries.
        assert!(ds.train.iter().all(|e| e.clean.is_none()));
        assert!(ds.test.iter().all(|e| e.clean.is_some()));
    }

    #[test]
    fn zero_sigma_pipeline_still_completes() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = synthetic_manifest(dir.path(), 2, false);
        let manifest = load_manifest(&mpath).unwrap();
        let ds = build_dataset(&manifest, &small_config(), &NoiseSpec::new(0.0, 0.0, 7).unwrap())
            .unwrap();
        for e in &ds.train {
            assert_eq!(e.triple.x_ans.data(), e.triple.y_noisier.data());
            assert_eq!(e.triple.x_ans.data(), e.triple.z_noisier_plus.data());
        }
    }

    #[test]
    fn rebuild_gives_identical_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = synthetic_manifest(dir.path(), 3, true);
        let manifest = load_manifest(&mpath).unwrap();
        let nspec = NoiseSpec::new(50.0, 50.0, 9).unwrap();
        let a = build_dataset(&manifest, &small_config(), &nspec).unwrap();
        let b = build_dataset(&manifest, &small_config(), &nspec).unwrap();
        assert_eq!(a.digest(), b.digest());
        // Different noise seed changes the digest.
        let c = build_dataset(&manifest, &small_config(), &NoiseSpec::new(50.0, 50.0, 10).unwrap())
            .unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn clean_patches_align_with_origins() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = synthetic_manifest(dir.path(), 2, true);
        let manifest = load_manifest(&mpath).unwrap();
        let ds = build_dataset(&manifest, &small_config(), &NoiseSpec::new(10.0, 10.0, 4).unwrap())
            .unwrap();
        // Re-read the clean source and compare the cropped region.
        for e in &ds.test {
            let idx: usize = e.source_id[3..].parse().unwrap();
            let clean_src = read_image(dir.path().join(format!("c{idx:02}.png"))).unwrap();
            let expected = clean_src
                .crop_square(e.origin.0, e.origin.1, ds.patch_config.patch_size)
                .unwrap();
            assert_eq!(e.clean.as_ref().unwrap().data(), expected.data());
        }
    }

    #[test]
    fn container_round_trip_preserves_content_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mpath = synthetic_manifest(dir.path(), 2, true);
        let manifest = load_manifest(&mpath).unwrap();
        let ds = build_dataset(&manifest, &small_config(), &NoiseSpec::new(25.0, 25.0, 2).unwrap())
            .unwrap();
        let bin = dir.path().join("dataset.bin");
        save_dataset(&ds, &bin).unwrap();
        let back = load_dataset(&bin).unwrap();
        assert_eq!(back.digest(), ds.digest());
        assert_eq!(back.train.len(), ds.train.len());
        for (a, b) in ds.test.iter().zip(&back.test) {
            assert_eq!(a.triple.z_noisier_plus.data(), b.triple.z_noisier_plus.data());
            assert_eq!(a.origin, b.origin);
            assert_eq!(a.source_id, b.source_id);
        }
        // Truncation is detected.
        let bytes = fs::read(&bin).unwrap();
        fs::write(&bin, &bytes[..bytes.len() - 10]).unwrap();
        assert!(load_dataset(&bin).is_err());
    }
}
