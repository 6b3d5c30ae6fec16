//! Dataset manifests.
//!
//! A dataset root holds one landmark file per sample at
//! `<root>/<signer>/<label>/<take>.slm` plus an optional `manifest.json`
//! index produced by [`build_manifest`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::slm::{read_slm, read_slm_header};
use super::{sample_id, SignSample};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub label: String,
    pub signer: String,
    pub take: u32,
    pub frames: usize,
}

impl ManifestEntry {
    pub fn id(&self) -> String {
        sample_id(&self.signer, &self.label, self.take)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub signers: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Builds a manifest from entries, sorting samples by (signer, label,
    /// take) and deriving sorted vocabularies.
    pub fn from_entries(mut samples: Vec<ManifestEntry>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Manifest("no samples found".into()));
        }
        samples.sort_by(|a, b| {
            (&a.signer, &a.label, a.take).cmp(&(&b.signer, &b.label, b.take))
        });
        let mut dups: Vec<String> = samples
            .windows(2)
            .filter(|w| (&w[0].signer, &w[0].label, w[0].take) == (&w[1].signer, &w[1].label, w[1].take))
            .map(|w| w[1].id())
            .collect();
        if !dups.is_empty() {
            dups.dedup();
            return Err(Error::Manifest(format!(
                "duplicate (signer, label, take): {}",
                dups.join(", ")
            )));
        }
        let classes: BTreeSet<_> = samples.iter().map(|s| s.label.clone()).collect();
        let signers: BTreeSet<_> = samples.iter().map(|s| s.signer.clone()).collect();
        Ok(Self {
            classes: classes.into_iter().collect(),
            signers: signers.into_iter().collect(),
            samples,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let classes: BTreeSet<_> = self.classes.iter().collect();
        let signers: BTreeSet<_> = self.signers.iter().collect();
        if classes.len() != self.classes.len() || signers.len() != self.signers.len() {
            return Err(Error::Manifest("vocabularies contain duplicates".into()));
        }
        for s in &self.samples {
            if !classes.contains(&s.label) {
                return Err(Error::Manifest(format!("sample {} has unknown label", s.id())));
            }
            if !signers.contains(&s.signer) {
                return Err(Error::Manifest(format!("sample {} has unknown signer", s.id())));
            }
        }
        Ok(())
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// Sample counts per signer, including signers without samples.
    pub fn samples_per_signer(&self) -> BTreeMap<&str, usize> {
        let mut m: BTreeMap<&str, usize> = self.signers.iter().map(|s| (s.as_str(), 0)).collect();
        for s in &self.samples {
            *m.entry(s.signer.as_str()).or_default() += 1;
        }
        m
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads `<root>/manifest.json`, falling back to scanning the tree.
    pub fn open(root: &Path) -> Result<Self> {
        let p = root.join(MANIFEST_FILE);
        if p.exists() {
            Self::load(&p)
        } else {
            build_manifest(root)
        }
    }

    pub fn load_sample(&self, root: &Path, entry: &ManifestEntry) -> Result<SignSample> {
        let (_, sequence) = read_slm(&root.join(&entry.path))?;
        if sequence.len() != entry.frames {
            return Err(Error::Manifest(format!(
                "{} has {} frames, manifest says {}",
                entry.path,
                sequence.len(),
                entry.frames
            )));
        }
        Ok(SignSample {
            sequence,
            label: entry.label.clone(),
            signer: entry.signer.clone(),
            take: entry.take,
        })
    }
}

fn sorted_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') {
            continue;
        }
        out.push((name, entry.path()));
    }
    out.sort();
    Ok(out)
}

/// Scans `<root>/<signer>/<label>/<take>.slm`.
pub fn build_manifest(root: &Path) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::NotFound(root.to_path_buf()));
    }
    let mut entries = Vec::new();
    for (signer, signer_dir) in sorted_dirs(root)? {
        if !signer_dir.is_dir() {
            continue;
        }
        for (label, label_dir) in sorted_dirs(&signer_dir)? {
            if !label_dir.is_dir() {
                continue;
            }
            for (file, path) in sorted_dirs(&label_dir)? {
                let Some(stem) = file.strip_suffix(".slm") else {
                    continue;
                };
                let take: u32 = stem.parse().map_err(|_| {
                    Error::Manifest(format!("{}: take name must be an integer", path.display()))
                })?;
                let header = read_slm_header(&path)?;
                entries.push(ManifestEntry {
                    path: format!("{signer}/{label}/{file}"),
                    label: label.clone(),
                    signer: signer.clone(),
                    take,
                    frames: header.frames,
                });
            }
        }
    }
    DatasetManifest::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::super::slm::{write_slm, SlmHeader};
    use super::super::{LandmarkFrame, LandmarkSequence};
    use super::*;

    fn put(root: &Path, rel: &str, frames: usize) {
        let seq = LandmarkSequence::new(
            vec![LandmarkFrame::from_coords(vec![[0.25, 0.75]; 4]); frames],
            30.0,
            rel,
        )
        .unwrap();
        write_slm(&root.join(rel), &SlmHeader::for_sequence(&seq), &seq).unwrap();
    }

    #[test]
    fn counts_samples_and_vocabularies() {
        let dir = tempfile::tempdir().unwrap();
        for s in ["s2", "s1"] {
            for l in ["c", "a", "b"] {
                for t in [2, 1] {
                    put(dir.path(), &format!("{s}/{l}/{t}.slm"), 3 + t as usize);
                }
            }
        }
        let m = build_manifest(dir.path()).unwrap();
        assert_eq!(m.samples.len(), 12);
        assert_eq!(m.classes, ["a", "b", "c"]);
        assert_eq!(m.signers, ["s1", "s2"]);
        assert_eq!(m.samples[0].id(), "s1/a/1");
        assert_eq!(m.samples[0].frames, 4);
        assert_eq!(m, build_manifest(dir.path()).unwrap());

        let sample = m.load_sample(dir.path(), &m.samples[1]).unwrap();
        assert_eq!(sample.take, 2);
        assert_eq!(sample.sequence.len(), 5);
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        match build_manifest(dir.path()) {
            Err(Error::Manifest(m)) => assert!(m.contains("no samples found")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_takes_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "s1/a/1.slm", 3);
        put(dir.path(), "s1/a/01.slm", 3);
        match build_manifest(dir.path()) {
            Err(Error::Manifest(m)) => assert!(m.contains("s1/a/1"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        put(dir.path(), "s1/a/1.slm", 3);
        put(dir.path(), "s2/a/1.slm", 3);
        let m = build_manifest(dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        m.save(&p).unwrap();
        assert_eq!(DatasetManifest::load(&p).unwrap(), m);
        assert_eq!(DatasetManifest::open(dir.path()).unwrap(), m);
    }
}
