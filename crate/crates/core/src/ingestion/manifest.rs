use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{read_json, write_json};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Semg,
    Ecg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub role: Role,
    pub subject: String,
    #[serde(default)]
    pub channel: u32,
    pub fs: f64,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            entries,
            base_dir: base_dir.into(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: DatasetManifest = read_json(path, "manifest")?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate().map_err(|e| Error::format(path, "manifest", e))?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn select(&self, role: Role, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role && e.split == split)
    }

    pub fn subjects(&self, role: Role, split: Split) -> BTreeSet<&str> {
        self.select(role, split).map(|e| e.subject.as_str()).collect()
    }

    /// Every file appears once, and no subject of either role is shared
    /// between the test split and the train/validation splits.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(&e.path) {
                return Err(Error::Corpus(format!("{} is listed more than once", e.path.display())));
            }
            if !(e.fs.is_finite() && e.fs > 0.0) {
                return Err(Error::Corpus(format!("{} has invalid rate {}", e.path.display(), e.fs)));
            }
        }
        for role in [Role::Semg, Role::Ecg] {
            let test = self.subjects(role, Split::Test);
            for split in [Split::Train, Split::Validation] {
                if let Some(s) = self.subjects(role, split).intersection(&test).next() {
                    return Err(Error::Corpus(format!(
                        "{role:?} subject {s} appears in both {} and test splits",
                        split.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}
