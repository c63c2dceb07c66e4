//! Dataset manifests: the CSV index of examples that drives augmentation,
//! featurization and training.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::effects::EffectKind;
use crate::error::{Error, Result};

/// Instrument families in label order.
pub const FAMILIES: [&str; 11] = [
    "bass",
    "brass",
    "flute",
    "guitar",
    "keyboard",
    "mallet",
    "organ",
    "reed",
    "string",
    "synth_lead",
    "vocal",
];

pub const NUM_CLASSES: usize = FAMILIES.len();

/// Label index of an instrument family name (accepts "synth lead" too).
pub fn family_label(name: &str) -> Option<u8> {
    let norm = name.trim().to_ascii_lowercase().replace([' ', '-'], "_");
    FAMILIES.iter().position(|f| *f == norm).map(|i| i as u8)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" | "training" => Ok(Split::Train),
            "valid" | "validation" | "val" => Ok(Split::Valid),
            "test" | "testing" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// One example: an audio or feature file with its family label.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub example_id: String,
    pub path: PathBuf,
    pub label: u8,
    pub split: Split,
    /// `None` for unprocessed audio.
    pub effect: Option<EffectKind>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    example_id: String,
    path: String,
    label: u8,
    split: Split,
    #[serde(default)]
    effect: Option<String>,
}

/// Ordered list of examples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split(&self, split: Split) -> DatasetManifest {
        DatasetManifest::new(self.rows.iter().filter(|r| r.split == split).cloned().collect())
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn appended(&self, other: &DatasetManifest) -> DatasetManifest {
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        DatasetManifest::new(rows)
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if r.label as usize >= NUM_CLASSES {
                return Err(Error::Data(format!(
                    "example {} has label {} outside 0..{NUM_CLASSES}",
                    r.example_id, r.label
                )));
            }
        }
        Ok(())
    }

    /// Reads a manifest CSV; relative paths resolve against the CSV's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let mut rows = Vec::new();
        for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
            let rec = rec.map_err(|e| Error::Format {
                path: path.to_path_buf(),
                what: "manifest",
                reason: format!("row {}: {e}", i + 1),
            })?;
            let effect = match rec.effect.as_deref().map(str::trim) {
                None | Some("") | Some("none") => None,
                Some(kind) => Some(kind.parse::<EffectKind>()?),
            };
            let p = PathBuf::from(&rec.path);
            rows.push(ManifestRow {
                example_id: rec.example_id,
                path: if p.is_absolute() { p } else { base.join(p) },
                label: rec.label,
                split: rec.split,
                effect,
            });
        }
        let manifest = DatasetManifest { rows };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Writes the manifest CSV, storing paths relative to its directory when possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        let to_err = |e: csv::Error| Error::Format {
            path: path.to_path_buf(),
            what: "manifest",
            reason: e.to_string(),
        };
        for r in &self.rows {
            let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
            writer
                .serialize(CsvRow {
                    example_id: r.example_id.clone(),
                    path: rel.to_string_lossy().into_owned(),
                    label: r.label,
                    split: r.split,
                    effect: Some(r.effect.map_or("none", |k| k.id()).to_string()),
                })
                .map_err(to_err)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}
