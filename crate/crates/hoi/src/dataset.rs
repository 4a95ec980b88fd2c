//! Manifests, dataset files on disk and the vocabulary file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use hoi_core::data::{
    recompute_contact_mask, HoiSample, HumanMotion, JointLayout, ObjectMotion, PointCloud, Template, CONTACT_THRESHOLD,
};
use hoi_core::vocab::{Special, UnifiedVocab};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HoiError, Result};
use crate::formats::{read_motion, read_points, write_bytes, write_motion, write_points};

/// One manifest row; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub caption: String,
    pub human_path: String,
    pub object_path: String,
    pub points_path: String,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HoiError::json(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HoiError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HoiError::json(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = read_json(path)?;
    let mut ids = BTreeSet::new();
    for e in &entries {
        if !ids.insert(&e.id) {
            return Err(HoiError::Config(format!("{}: duplicate id {:?}", path.display(), e.id)));
        }
    }
    Ok(entries)
}

fn base(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes every sample's files under `dir/samples/` and the manifest at
/// `dir/<name>`.
pub fn write_dataset(dir: &Path, name: &str, samples: &[HoiSample]) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(samples.len());
    for s in samples {
        let e = ManifestEntry {
            id: s.id.clone(),
            caption: s.caption.clone(),
            human_path: format!("samples/{}.human.hoim", s.id),
            object_path: format!("samples/{}.object.hoim", s.id),
            points_path: format!("samples/{}.points.hoip", s.id),
        };
        write_motion(&dir.join(&e.human_path), &s.human.frames)?;
        write_motion(&dir.join(&e.object_path), &s.object.frames)?;
        write_points(&dir.join(&e.points_path), &s.points.points)?;
        entries.push(e);
    }
    let path = dir.join(name);
    write_json(&path, &entries)?;
    Ok(path)
}

/// Reads one entry. Contact flags are recomputed from geometry and the
/// template is recovered from the caption when it matches one.
pub fn load_entry(base: &Path, e: &ManifestEntry) -> Result<HoiSample> {
    let human = HumanMotion::new(read_motion(&base.join(&e.human_path))?, JointLayout::synthetic())?;
    let object = ObjectMotion::new(read_motion(&base.join(&e.object_path))?)?;
    let points = PointCloud {
        points: read_points(&base.join(&e.points_path))?,
        shape: None,
    };
    if human.len() != object.len() {
        return Err(HoiError::Config(format!(
            "{}: human has {} frames, object has {}",
            e.id,
            human.len(),
            object.len()
        )));
    }
    if points.len() < 4 {
        return Err(HoiError::Config(format!("{}: point cloud needs at least 4 points", e.id)));
    }
    let template = Template::parse(&e.caption);
    let contact_mask = recompute_contact_mask(&human, &object, &points, CONTACT_THRESHOLD);
    Ok(HoiSample {
        id: e.id.clone(),
        caption: e.caption.clone(),
        human,
        object,
        points: template.map_or(points.clone(), |t| PointCloud {
            shape: Some(t.noun().shape),
            ..points
        }),
        contact_mask,
        template,
    })
}

pub fn load_dataset(manifest: &Path) -> Result<Vec<HoiSample>> {
    let dir = base(manifest);
    read_manifest(manifest)?.iter().map(|e| load_entry(&dir, e)).collect()
}

/// Counts and caption histogram written next to generated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub frames: usize,
    pub points: usize,
    pub contact_frames: usize,
    pub captions: BTreeMap<String, usize>,
    pub splits: BTreeMap<String, usize>,
}

impl DatasetSummary {
    pub fn of(samples: &[HoiSample], splits: BTreeMap<String, usize>) -> Self {
        let mut captions = BTreeMap::new();
        for s in samples {
            *captions.entry(s.caption.clone()).or_insert(0) += 1;
        }
        Self {
            samples: samples.len(),
            frames: samples.first().map_or(0, |s| s.len()),
            points: samples.first().map_or(0, |s| s.points.len()),
            contact_frames: samples.iter().map(|s| s.contact_mask.iter().filter(|&&c| c).count()).sum(),
            captions,
            splits,
        }
    }
}

/// Vocabulary file; id layout is recomputed on load.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabFile {
    pub words: Vec<String>,
    pub k_h: usize,
    pub k_o: usize,
    pub specials: Vec<String>,
}

impl VocabFile {
    pub fn of(v: &UnifiedVocab) -> Self {
        Self {
            words: v.words().to_vec(),
            k_h: v.human_size(),
            k_o: v.object_size(),
            specials: Special::ALL.iter().map(|s| s.name().to_string()).collect(),
        }
    }

    pub fn build(&self) -> Result<UnifiedVocab> {
        let want: Vec<&str> = Special::ALL.iter().map(|s| s.name()).collect();
        if self.specials != want {
            return Err(HoiError::Config(format!("vocab specials {:?} differ from the fixed list {:?}", self.specials, want)));
        }
        Ok(UnifiedVocab::build(&self.words, self.k_h, self.k_o)?)
    }

    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("vocab serializes")))
    }
}

pub fn write_vocab(path: &Path, v: &UnifiedVocab) -> Result<()> {
    write_json(path, &VocabFile::of(v))
}

pub fn read_vocab(path: &Path) -> Result<UnifiedVocab> {
    read_json::<VocabFile>(path)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hoi_core::data::{generate_synthetic_dataset, TemplateSet};
    use hoi_core::tasks::default_words;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_synthetic_dataset(3, 5, 16, 24, &TemplateSet::all()).unwrap();
        let m = write_dataset(dir.path(), "manifest.json", &samples).unwrap();
        let back = load_dataset(&m).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn manifest_keys_are_exact() {
        let ok = r#"[{"id":"a","caption":"c","human_path":"h","object_path":"o","points_path":"p"}]"#;
        assert_eq!(serde_json::from_str::<Vec<ManifestEntry>>(ok).unwrap().len(), 1);
        let extra = r#"[{"id":"a","caption":"c","human_path":"h","object_path":"o","points_path":"p","x":1}]"#;
        assert!(serde_json::from_str::<Vec<ManifestEntry>>(extra).is_err());
        let missing = r#"[{"id":"a","caption":"c","human_path":"h","object_path":"o"}]"#;
        assert!(serde_json::from_str::<Vec<ManifestEntry>>(missing).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let e = ManifestEntry {
            id: "a".into(),
            caption: "c".into(),
            human_path: "h".into(),
            object_path: "o".into(),
            points_path: "p".into(),
        };
        let p = dir.path().join("m.json");
        write_json(&p, &vec![e.clone(), e]).unwrap();
        assert!(matches!(read_manifest(&p), Err(HoiError::Config(_))));
    }

    #[test]
    fn vocab_file_round_trip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let v = UnifiedVocab::build(&default_words(), 64, 32).unwrap();
        let p = dir.path().join("vocab.json");
        write_vocab(&p, &v).unwrap();
        assert_eq!(read_vocab(&p).unwrap(), v);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(!text.contains("base"));
        let mut f = VocabFile::of(&v);
        let h = f.hash();
        f.k_o = 33;
        assert_ne!(f.hash(), h);
        f.specials.swap(0, 1);
        assert!(f.build().is_err());
    }
}
