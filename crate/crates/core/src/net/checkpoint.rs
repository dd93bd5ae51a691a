//! Versioned checkpoint container.
//!
//! Layout: magic, version, length-prefixed JSON header (configs, history,
//! best epoch, dataset digest), raw little-endian f64 parameters, SHA-256
//! trailer over everything before it. Loading verifies the checksum and
//! parameter count, so truncation or bit rot surfaces as a checkpoint
//! error, and an optional expected config is checked against the stored
//! one.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::train::{EpochStats, TrainConfig, TrainedModel};
use crate::net::unet::{build_unet, param_count, UNetConfig};

const CKPT_MAGIC: &[u8; 8] = b"DSPCKPT1";
const CKPT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    unet_config: UNetConfig,
    train_config: TrainConfig,
    history: Vec<EpochStats>,
    best_epoch: usize,
    dataset_digest: String,
}

/// Serialize a trained model.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = serde_json::to_vec(&CheckpointHeader {
        unet_config: *model.net.config(),
        train_config: model.train_config,
        history: model.history.clone(),
        best_epoch: model.best_epoch,
        dataset_digest: model.dataset_digest.clone(),
    })
    .expect("header serializes");

    let mut body = Vec::with_capacity(header.len() + model.net.num_params() * 8 + 64);
    body.extend_from_slice(CKPT_MAGIC);
    body.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    body.extend_from_slice(&(header.len() as u64).to_le_bytes());
    body.extend_from_slice(&header);
    body.extend_from_slice(&(model.net.num_params() as u64).to_le_bytes());
    for p in model.net.params() {
        body.extend_from_slice(&p.to_le_bytes());
    }
    let checksum = Sha256::digest(&body);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&body).map_err(|e| Error::io(path, e))?;
    f.write_all(&checksum).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load a checkpoint, optionally insisting on a particular architecture.
pub fn load_model(path: impl AsRef<Path>, expected: Option<&UNetConfig>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < CKPT_MAGIC.len() + 4 + 8 + 32 {
        return Err(fail("file too short"));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != checksum {
        return Err(fail("checksum mismatch (truncated or corrupted)"));
    }
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > body.len() {
            return Err(fail("unexpected end of data"));
        }
        let s = &body[pos..pos + n];
        pos += n;
        Ok(s)
    };
    if take(8)? != CKPT_MAGIC {
        return Err(fail("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(fail(&format!(
            "unsupported checkpoint version {version} (expected {CKPT_VERSION})"
        )));
    }
    let hlen = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let header: CheckpointHeader = serde_json::from_slice(take(hlen)?)
        .map_err(|e| fail(&format!("bad header: {e}")))?;
    let n_params = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    if n_params != param_count(&header.unet_config) {
        return Err(fail(&format!(
            "parameter count {n_params} does not match architecture ({})",
            param_count(&header.unet_config)
        )));
    }
    let raw = take(n_params * 8)?;
    let params: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    if let Some(exp) = expected {
        if *exp != header.unet_config {
            return Err(Error::Checkpoint(format!(
                "{}: config mismatch: checkpoint has {:?}, expected {:?}",
                path.display(),
                header.unet_config,
                exp
            )));
        }
    }

    let mut net = build_unet(&header.unet_config, 0)?;
    net.set_params(&params)?;
    Ok(TrainedModel {
        net,
        train_config: header.train_config,
        history: header.history,
        best_epoch: header.best_epoch,
        dataset_digest: header.dataset_digest,
    })
}
