//! Corpus manifests and the quality-based selection pipeline: score every
//! utterance with the acoustic metrics, then drop the worst slice per
//! speaker before training.
//!
//! Manifests are JSON-lines files, one utterance per line. Unknown fields
//! round-trip untouched so external annotations survive a rewrite.

mod filter;


use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::QualityMetrics;
use crate::textfront::Lang;

pub use filter::{filter_corpus, score_corpus, top_speakers, ScoredCorpus};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: invalid manifest record: {source}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate utterance id {id:?}")]
    DuplicateId { id: String },
    #[error("record {id:?} has an empty speaker name")]
    EmptySpeaker { id: String },
    #[error("speaker {speaker:?} appears in both found and target manifests")]
    SpeakerOverlap { speaker: String },
    #[error("drop fraction {value} outside [0, 1)")]
    BadDropFraction { value: f64 },
    #[error("top-speakers count must be positive")]
    BadSpeakerCount,
    #[error(
        "manifest roots differ: {} vs {}",
        found.display(),
        target.display()
    )]
    RootMismatch { found: PathBuf, target: PathBuf },
    #[error("record {id:?} carries non-finite metrics; rescore it instead")]
    NonFiniteMetrics { id: String },
}

/// Where a manifest's recordings came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Scraped or repurposed speech of uncontrolled quality.
    Found,
    /// Studio-grade recordings of a cloning target speaker.
    Target,
}

/// An explicit language annotation over `[start, end)` characters of the
/// normalized utterance text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LangSpan {
    pub lang: Lang,
    pub start: usize,
    pub end: usize,
}

/// One utterance of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    /// Audio path relative to the manifest root.
    pub audio: String,
    pub text: String,
    pub speaker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang_spans: Option<Vec<LangSpan>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<QualityMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    /// Fields this toolkit does not interpret, preserved verbatim.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl UtteranceRecord {
    /// Spans in the tuple form the text front end consumes.
    pub fn span_tuples(&self) -> Option<Vec<(Lang, usize, usize)>> {
        self.lang_spans
            .as_ref()
            .map(|spans| spans.iter().map(|s| (s.lang, s.start, s.end)).collect())
    }

    /// True unless a filtering pass explicitly rejected the record.
    pub fn is_kept(&self) -> bool {
        self.kept != Some(false)
    }
}

/// A list of utterances sharing one audio root directory.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    /// Directory audio paths are resolved against.
    pub root: PathBuf,
    /// Tag for homogeneous manifests; `None` after merging.
    pub provenance: Option<Provenance>,
}

impl CorpusManifest {
    /// Build a manifest, checking id uniqueness and speaker names.
    pub fn new(
        records: Vec<UtteranceRecord>,
        root: PathBuf,
        provenance: Option<Provenance>,
    ) -> Result<Self, DataError> {
        let mut seen = BTreeSet::new();
        for record in &records {
            if !seen.insert(record.id.clone()) {
                return Err(DataError::DuplicateId {
                    id: record.id.clone(),
                });
            }
            if record.speaker.is_empty() {
                return Err(DataError::EmptySpeaker {
                    id: record.id.clone(),
                });
            }
        }
        Ok(CorpusManifest {
            records,
            root,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Absolute path of a record's audio file.
    pub fn resolve_audio(&self, record: &UtteranceRecord) -> PathBuf {
        self.root.join(&record.audio)
    }

    /// Sorted unique speaker names.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.records.iter().map(|r| r.speaker.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Records that survived filtering (or were never filtered).
    pub fn kept_records(&self) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(|r| r.is_kept())
    }
}

/// Read a JSON-lines manifest. The audio root is the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: UtteranceRecord =
            serde_json::from_str(line).map_err(|source| DataError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?;
        records.push(record);
    }
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    CorpusManifest::new(records, root, None)
}

/// Write a manifest as JSON-lines, one record per line, stable field order.
pub fn save_manifest(path: &Path, manifest: &CorpusManifest) -> Result<(), DataError> {
    let mut out = String::new();
    for record in &manifest.records {
        if let Some(m) = &record.metrics {
            if !m.is_finite() {
                return Err(DataError::NonFiniteMetrics {
                    id: record.id.clone(),
                });
            }
        }
        let line = serde_json::to_string(record).expect("record serialization cannot fail");
        out.push_str(&line);
        out.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(out.as_bytes()).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Concatenate a found-data manifest with a target-speaker manifest.
///
/// Utterance ids must be globally unique and no speaker may appear on both
/// sides; each record is stamped with its side's provenance. A side that is
/// empty contributes nothing, and the other side's root wins.
pub fn merge_manifests(
    found: &CorpusManifest,
    target: &CorpusManifest,
) -> Result<CorpusManifest, DataError> {
    if !found.is_empty() && !target.is_empty() && found.root != target.root {
        return Err(DataError::RootMismatch {
            found: found.root.clone(),
            target: target.root.clone(),
        });
    }
    let found_speakers: BTreeSet<&str> =
        found.records.iter().map(|r| r.speaker.as_str()).collect();
    for record in &target.records {
        if found_speakers.contains(record.speaker.as_str()) {
            return Err(DataError::SpeakerOverlap {
                speaker: record.speaker.clone(),
            });
        }
    }

    let mut records = Vec::with_capacity(found.len() + target.len());
    for (manifest, provenance) in [(found, Provenance::Found), (target, Provenance::Target)] {
        for record in &manifest.records {
            let mut record = record.clone();
            record.provenance = Some(provenance);
            records.push(record);
        }
    }
    let root = if found.is_empty() {
        target.root.clone()
    } else {
        found.root.clone()
    };
    CorpusManifest::new(records, root, None)
}
