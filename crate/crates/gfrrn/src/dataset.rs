//! Dataset layout: `<root>/<pair_id>/I.png` + `T.png`, a line-per-pair
//! manifest for evaluation, and the on-disk label cache.

use crate::error::{Error, Result};
use crate::img::{load_signed_png16, save_signed_png16, Image};
use crate::labels::LabelTriplet;
use std::fs;
use std::path::{Path, PathBuf};

/// One manifest record.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub pair_id: String,
    pub i_path: PathBuf,
    pub t_path: PathBuf,
}

/// List of (pair id, I path, T path), resolved relative to a root.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Discover `<root>/<pair_id>/I.png` + `T.png` directories.
    pub fn scan(root: &Path) -> Result<DatasetManifest> {
        let mut entries = Vec::new();
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let i_path = dir.join("I.png");
            let t_path = dir.join("T.png");
            if i_path.exists() && t_path.exists() {
                entries.push(ManifestEntry {
                    pair_id: dir
                        .file_name()
                        .and_then(|n| n.to_str())
                        .unwrap_or_default()
                        .to_string(),
                    i_path,
                    t_path,
                });
            }
        }
        if entries.is_empty() {
            return Err(Error::invalid(format!(
                "no <pair>/I.png + T.png directories under {}",
                root.display()
            )));
        }
        Ok(DatasetManifest {
            root: root.to_path_buf(),
            entries,
        })
    }

    /// Parse a manifest file: one `pair_id,i_rel,t_rel` record per line.
    pub fn load(path: &Path) -> Result<DatasetManifest> {
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let text = fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::invalid(format!(
                    "manifest line {}: expected 'pair_id,i_path,t_path'",
                    ln + 1
                )));
            }
            entries.push(ManifestEntry {
                pair_id: parts[0].to_string(),
                i_path: root.join(parts[1]),
                t_path: root.join(parts[2]),
            });
        }
        if entries.is_empty() {
            return Err(Error::invalid("manifest has no records"));
        }
        Ok(DatasetManifest { root, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let root = path.parent().unwrap_or(Path::new("."));
        let mut out = String::new();
        for e in &self.entries {
            let rel = |p: &Path| {
                p.strip_prefix(root)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            };
            out.push_str(&format!(
                "{},{},{}\n",
                e.pair_id,
                rel(&e.i_path),
                rel(&e.t_path)
            ));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Load and validate one pair: equal-sized RGB images.
    pub fn load_pair(&self, entry: &ManifestEntry) -> Result<(Image, Image)> {
        let i = Image::load_png(&entry.i_path)?;
        let t = Image::load_png(&entry.t_path)?;
        if !i.same_size(&t) {
            return Err(Error::invalid(format!(
                "pair {}: I and T sizes differ",
                entry.pair_id
            )));
        }
        Ok((i, t))
    }
}

/// Write the three label files: clipped 8-bit transmission and reflection
/// PNGs plus the signed residual as an offset-encoded 16-bit PNG.
pub fn write_label_cache(dir: &Path, labels: &LabelTriplet) -> Result<()> {
    fs::create_dir_all(dir)?;
    labels.transmission.save_png(&dir.join("transmission.png"))?;
    Image::from_clipped(labels.reflection_label.clone()).save_png(&dir.join("reflection.png"))?;
    save_signed_png16(&labels.residual_label, &dir.join("residual.png"))?;
    Ok(())
}

/// Read a label cache back. The 8-bit files round-trip at 1/255
/// resolution; the residual round-trips at 16-bit resolution.
pub fn read_label_cache(dir: &Path) -> Result<LabelTriplet> {
    Ok(LabelTriplet {
        transmission: Image::load_png(&dir.join("transmission.png"))?,
        reflection_label: Image::load_png(&dir.join("reflection.png"))?.into_pixels(),
        residual_label: load_signed_png16(&dir.join("residual.png"))?,
    })
}
