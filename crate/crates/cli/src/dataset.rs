//! Input images and ground-truth discovery.
//!
//! Ground truths for an image with stem `id` are `<id>.gt<k>.png` or
//! `<id>.gt<k>.txt` in the ground-truth directory (the PNG wins when both
//! exist). If that directory holds a `manifest.json` of the form
//! `{"images": [{"id": "...", "annotators": N}]}`, listed images must have
//! exactly `N` ground truths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

const IMAGE_EXTENSIONS: [&str; 2] = ["png", "ppm"];

#[derive(Debug, Deserialize)]
pub struct Manifest {
    pub images: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub annotators: usize,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid manifest {}", path.display()))
    }
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn is_image(path: &Path) -> bool {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    // label maps written next to images are not inputs
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) && !name.contains(".gt") && !name.contains(".labels.")
        && !name.contains(".overlay.")
}

/// Expands files and directories (non-recursively) into a sorted,
/// de-duplicated list of image paths.
pub fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .with_context(|| format!("cannot read {}", input.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()
                .with_context(|| format!("cannot read {}", input.display()))?;
            found.retain(|p| p.is_file() && is_image(p));
            found.sort();
            out.extend(found);
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"))
                .with_context(|| format!("cannot read {}", input.display()));
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|p| seen.insert(p.clone()));
    if out.is_empty() {
        bail!("no input images");
    }
    Ok(out)
}

/// Ground-truth files per image stem.
#[derive(Debug, Default)]
pub struct GroundTruthIndex {
    files: BTreeMap<String, Vec<PathBuf>>,
    expected: BTreeMap<String, usize>,
}

impl GroundTruthIndex {
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut by_key: BTreeMap<(String, usize), PathBuf> = BTreeMap::new();
        let entries = std::fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?;
        for entry in entries {
            let path = entry.with_context(|| format!("cannot read {}", dir.display()))?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some((base, ext)) = name.rsplit_once('.') else { continue };
            if ext != "png" && ext != "txt" {
                continue;
            }
            let Some((id, k)) = base.rsplit_once(".gt") else { continue };
            let Ok(k) = k.parse::<usize>() else { continue };
            let slot = by_key.entry((id.to_string(), k)).or_insert_with(|| path.clone());
            if ext == "png" {
                *slot = path;
            }
        }
        let mut files: BTreeMap<String, Vec<PathBuf>> = BTreeMap::new();
        for ((id, _), path) in by_key {
            files.entry(id).or_default().push(path);
        }
        let manifest = dir.join("manifest.json");
        let expected = if manifest.is_file() {
            Manifest::load(&manifest)?.images.into_iter().map(|e| (e.id, e.annotators)).collect()
        } else {
            BTreeMap::new()
        };
        Ok(Self { files, expected })
    }

    /// Ground-truth paths for `id`, in annotator order.
    pub fn lookup(&self, id: &str) -> Result<&[PathBuf]> {
        let found = self.files.get(id).map(Vec::as_slice).unwrap_or(&[]);
        if let Some(&n) = self.expected.get(id) {
            if found.len() != n {
                bail!("{id}: manifest lists {n} annotators, found {} ground-truth files", found.len());
            }
        }
        Ok(found)
    }
}
