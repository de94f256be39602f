//! Dataset manifests, feature/label archives, and the synthetic corpus
//! generator.
//!
//! Archives use the ZRFA container: a small indexed binary format holding
//! named row-major matrices, bit-exact across platforms (little-endian).
//! Label archives reuse the container with `i32` payloads and magic `ZRLA`.
//! Manifests are line-delimited JSON.

mod archive;
mod synth;

pub use archive::{read_features, read_labels, write_features, write_labels};
pub use synth::{generate_synthetic_corpus, SpeakerTruth, SynthConfig};

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate utterance id '{0}'")]
    DuplicateUtterance(String),
    #[error("dimension mismatch: archive dim {expected}, entry '{id}' has dim {got}")]
    DimMismatch {
        id: String,
        expected: usize,
        got: usize,
    },
    #[error("empty archive")]
    EmptyArchive,
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: [u8; 4] },
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error("truncated payload")]
    Truncated,
    #[error("index/payload mismatch: {0}")]
    IndexMismatch(String),
    #[error("unknown utterance '{0}'")]
    UnknownUtterance(String),
    #[error("label {value} out of range [0, {num_labels})")]
    LabelOutOfRange { value: i32, num_labels: usize },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CorpusResult<T> = Result<T, CorpusError>;

/// One utterance in a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language_id: String,
    pub num_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// Ordered list of utterances making up one split of a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<UtteranceRecord>,
    pub split_tag: SplitTag,
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    utt: String,
    spk: String,
    lang: String,
    frames: usize,
}

impl Manifest {
    pub fn new(records: Vec<UtteranceRecord>, split_tag: SplitTag) -> CorpusResult<Self> {
        let m = Manifest { records, split_tag };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> CorpusResult<()> {
        if self.records.is_empty() {
            return Err(CorpusError::InvalidManifest("no records".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.records {
            if !seen.insert(r.utterance_id.as_str()) {
                return Err(CorpusError::DuplicateUtterance(r.utterance_id.clone()));
            }
            if r.num_frames == 0 {
                return Err(CorpusError::InvalidManifest(format!(
                    "utterance '{}' has zero frames",
                    r.utterance_id
                )));
            }
            if r.speaker_id.is_empty() {
                return Err(CorpusError::InvalidManifest(format!(
                    "utterance '{}' has empty speaker id",
                    r.utterance_id
                )));
            }
        }
        Ok(())
    }

    pub fn record(&self, utterance_id: &str) -> CorpusResult<&UtteranceRecord> {
        self.records
            .iter()
            .find(|r| r.utterance_id == utterance_id)
            .ok_or_else(|| CorpusError::UnknownUtterance(utterance_id.to_string()))
    }

    /// Distinct language ids, in first-appearance order.
    pub fn languages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.language_id) {
                out.push(r.language_id.clone());
            }
        }
        out
    }

    /// Distinct speaker ids, in first-appearance order.
    pub fn speakers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.speaker_id) {
                out.push(r.speaker_id.clone());
            }
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> CorpusResult<()> {
        for r in &self.records {
            let line = ManifestLine {
                utt: r.utterance_id.clone(),
                spk: r.speaker_id.clone(),
                lang: r.language_id.clone(),
                frames: r.num_frames,
            };
            serde_json::to_writer(&mut sink, &line)?;
            sink.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(source: R, split_tag: SplitTag) -> CorpusResult<Self> {
        let mut records = Vec::new();
        for line in source.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ManifestLine = serde_json::from_str(&line)?;
            records.push(UtteranceRecord {
                utterance_id: parsed.utt,
                speaker_id: parsed.spk,
                language_id: parsed.lang,
                num_frames: parsed.frames,
            });
        }
        Manifest::new(records, split_tag)
    }
}

/// Per-utterance frame matrices, all sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureArchive {
    entries: IndexMap<String, Array2<f32>>,
    dim: usize,
}

impl FeatureArchive {
    pub fn new(dim: usize) -> Self {
        FeatureArchive {
            entries: IndexMap::new(),
            dim,
        }
    }

    pub fn insert(&mut self, utterance_id: &str, frames: Array2<f32>) -> CorpusResult<()> {
        if frames.ncols() != self.dim {
            return Err(CorpusError::DimMismatch {
                id: utterance_id.to_string(),
                expected: self.dim,
                got: frames.ncols(),
            });
        }
        if self.entries.contains_key(utterance_id) {
            return Err(CorpusError::DuplicateUtterance(utterance_id.to_string()));
        }
        self.entries.insert(utterance_id.to_string(), frames);
        Ok(())
    }

    pub fn get(&self, utterance_id: &str) -> CorpusResult<&Array2<f32>> {
        self.entries
            .get(utterance_id)
            .ok_or_else(|| CorpusError::UnknownUtterance(utterance_id.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f32>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn total_frames(&self) -> usize {
        self.entries.values().map(|m| m.nrows()).sum()
    }
}

/// Per-utterance integer frame labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelArchive {
    entries: IndexMap<String, Vec<i32>>,
}

impl LabelArchive {
    pub fn new() -> Self {
        LabelArchive {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, utterance_id: &str, labels: Vec<i32>) -> CorpusResult<()> {
        if self.entries.contains_key(utterance_id) {
            return Err(CorpusError::DuplicateUtterance(utterance_id.to_string()));
        }
        self.entries.insert(utterance_id.to_string(), labels);
        Ok(())
    }

    pub fn get(&self, utterance_id: &str) -> CorpusResult<&Vec<i32>> {
        self.entries
            .get(utterance_id)
            .ok_or_else(|| CorpusError::UnknownUtterance(utterance_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[i32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Number of distinct label values assuming labels cover `[0, K)`.
    pub fn num_labels(&self) -> usize {
        self.entries
            .values()
            .flat_map(|v| v.iter())
            .map(|&l| l as i64 + 1)
            .max()
            .unwrap_or(0) as usize
    }

    /// Checks every label lies in `[0, num_labels)`.
    pub fn check_range(&self, num_labels: usize) -> CorpusResult<()> {
        for labels in self.entries.values() {
            for &l in labels {
                if l < 0 || l as usize >= num_labels {
                    return Err(CorpusError::LabelOutOfRange {
                        value: l,
                        num_labels,
                    });
                }
            }
        }
        Ok(())
    }
}

impl Default for LabelArchive {
    fn default() -> Self {
        Self::new()
    }
}

/// Cross-checks manifest, features, and (optionally) labels: every manifest
/// utterance present with matching frame counts and a single feature dim.
pub fn check_consistency(
    manifest: &Manifest,
    features: &FeatureArchive,
    labels: Option<&LabelArchive>,
) -> CorpusResult<()> {
    manifest.validate()?;
    for r in &manifest.records {
        let frames = features.get(&r.utterance_id)?;
        if frames.nrows() != r.num_frames {
            return Err(CorpusError::IndexMismatch(format!(
                "utterance '{}': manifest says {} frames, archive has {}",
                r.utterance_id,
                r.num_frames,
                frames.nrows()
            )));
        }
        if let Some(labels) = labels {
            let l = labels.get(&r.utterance_id)?;
            if l.len() != r.num_frames {
                return Err(CorpusError::IndexMismatch(format!(
                    "utterance '{}': manifest says {} frames, labels have {}",
                    r.utterance_id,
                    r.num_frames,
                    l.len()
                )));
            }
        }
    }
    Ok(())
}

/// Splits a manifest into train/test parts, per speaker, deterministically.
///
/// For each speaker the last `ceil(test_fraction * n)` utterances (in shuffled
/// order) go to the test split; every speaker keeps at least one train
/// utterance.
pub fn split_manifest(
    manifest: &Manifest,
    test_fraction: f64,
    seed: u64,
) -> CorpusResult<(Manifest, Manifest)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if !(0.0..1.0).contains(&test_fraction) {
        return Err(CorpusError::InvalidConfig(format!(
            "test_fraction {test_fraction} not in [0, 1)"
        )));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut by_speaker: IndexMap<&str, Vec<&UtteranceRecord>> = IndexMap::new();
    for r in &manifest.records {
        by_speaker.entry(r.speaker_id.as_str()).or_default().push(r);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut utts) in by_speaker {
        utts.shuffle(&mut rng);
        let n_test = ((utts.len() as f64 * test_fraction).ceil() as usize).min(utts.len() - 1);
        let split = utts.len() - n_test;
        for (i, r) in utts.into_iter().enumerate() {
            if i < split {
                train.push((*r).clone());
            } else {
                test.push((*r).clone());
            }
        }
    }
    // Restore manifest order within each split.
    let order: IndexMap<&str, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.utterance_id.as_str(), i))
        .collect();
    train.sort_by_key(|r| order[r.utterance_id.as_str()]);
    test.sort_by_key(|r| order[r.utterance_id.as_str()]);
    Ok((
        Manifest::new(train, SplitTag::Train)?,
        Manifest::new(test, SplitTag::Test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(utt: &str, spk: &str) -> UtteranceRecord {
        UtteranceRecord {
            utterance_id: utt.to_string(),
            speaker_id: spk.to_string(),
            language_id: "lang0".to_string(),
            num_frames: 10,
        }
    }

    #[test]
    fn manifest_rejects_duplicates_and_zero_frames() {
        let err = Manifest::new(vec![record("u1", "s1"), record("u1", "s2")], SplitTag::Train);
        assert!(matches!(err, Err(CorpusError::DuplicateUtterance(_))));

        let mut bad = record("u2", "s1");
        bad.num_frames = 0;
        assert!(Manifest::new(vec![bad], SplitTag::Train).is_err());
    }

    #[test]
    fn manifest_jsonl_round_trip() {
        let m = Manifest::new(vec![record("u1", "s1"), record("u2", "s2")], SplitTag::Train)
            .unwrap();
        let mut buf = Vec::new();
        m.write_jsonl(&mut buf).unwrap();
        let back = Manifest::read_jsonl(buf.as_slice(), SplitTag::Train).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn archive_rejects_dim_mismatch() {
        let mut a = FeatureArchive::new(13);
        assert!(a.insert("u1", Array2::zeros((4, 13))).is_ok());
        let err = a.insert("u2", Array2::zeros((4, 39)));
        assert!(matches!(err, Err(CorpusError::DimMismatch { .. })));
    }

    #[test]
    fn split_keeps_speakers_in_train() {
        let records: Vec<_> = (0..20)
            .map(|i| record(&format!("u{i}"), &format!("s{}", i % 4)))
            .collect();
        let m = Manifest::new(records, SplitTag::Train).unwrap();
        let (train, test) = split_manifest(&m, 0.25, 7).unwrap();
        assert_eq!(train.records.len() + test.records.len(), 20);
        assert_eq!(train.speakers().len(), 4);
        assert!(!test.records.is_empty());
        // Deterministic.
        let (train2, _) = split_manifest(&m, 0.25, 7).unwrap();
        assert_eq!(train, train2);
    }
}
