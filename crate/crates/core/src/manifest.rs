//! Dataset manifest: a line-oriented text file naming the noisy images and
//! their optional registered clean counterparts.
//!
//! Grammar (one directive per line, `#` starts a comment):
//!
//! ```text
//! root = relative/or/absolute/dir      # optional, default: manifest's dir
//! entry id=img01 noisy=noisy/img01.png clean=clean/img01.png
//! entry id=img02 noisy=noisy/img02.png
//! ```
//!
//! Paths are resolved against `root`. `clean` is optional; entries without
//! it load fine but are rejected later by operations that need ground truth.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub image_id: String,
    pub noisy_path: PathBuf,
    pub clean_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Entries sorted by image id; the canonical iteration order for
    /// everything downstream.
    pub fn sorted_entries(&self) -> Vec<&ManifestEntry> {
        let mut v: Vec<&ManifestEntry> = self.entries.iter().collect();
        v.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        v
    }
}

fn parse_fields<'a>(line: &'a str, lineno: usize) -> Result<Vec<(&'a str, &'a str)>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=').ok_or_else(|| {
                Error::Data(format!(
                    "manifest line {lineno}: expected key=value, got {tok:?}"
                ))
            })
        })
        .collect()
}

/// Parse and validate a manifest file. Every noisy path must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let default_root = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut root = default_root.clone();
    let mut entries = Vec::new();
    let mut seen_ids = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("root") {
            let rest = rest.trim_start();
            let value = rest.strip_prefix('=').ok_or_else(|| {
                Error::Data(format!("manifest line {lineno}: expected root = <dir>"))
            })?;
            let dir = PathBuf::from(value.trim());
            root = if dir.is_absolute() {
                dir
            } else {
                default_root.join(dir)
            };
            continue;
        }
        let body = line.strip_prefix("entry").ok_or_else(|| {
            Error::Data(format!(
                "manifest line {lineno}: unknown directive {:?}",
                line.split_whitespace().next().unwrap_or("")
            ))
        })?;

        let mut id = None;
        let mut noisy = None;
        let mut clean = None;
        for (key, value) in parse_fields(body, lineno)? {
            match key {
                "id" => id = Some(value.to_string()),
                "noisy" => noisy = Some(PathBuf::from(value)),
                "clean" => clean = Some(PathBuf::from(value)),
                other => {
                    return Err(Error::Data(format!(
                        "manifest line {lineno}: unknown field {other:?}"
                    )))
                }
            }
        }
        let image_id = id.ok_or_else(|| {
            Error::Data(format!("manifest line {lineno}: missing id field"))
        })?;
        let noisy_rel = noisy.ok_or_else(|| {
            Error::Data(format!("manifest line {lineno}: missing noisy field"))
        })?;
        if !seen_ids.insert(image_id.clone()) {
            return Err(Error::Data(format!(
                "manifest line {lineno}: duplicate image id {image_id:?}"
            )));
        }
        entries.push(ManifestEntry {
            image_id,
            noisy_path: root.join(noisy_rel),
            clean_path: clean.map(|c| root.join(c)),
        });
    }

    if entries.is_empty() {
        return Err(Error::Data(format!(
            "empty manifest: {} lists no entries",
            path.display()
        )));
    }

    let missing: Vec<String> = entries
        .iter()
        .filter(|e| !e.noisy_path.exists())
        .map(|e| format!("{} ({})", e.image_id, e.noisy_path.display()))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Data(format!(
            "missing noisy files: {}",
            missing.join(", ")
        )));
    }

    Ok(DatasetManifest { root, entries })
}
