//! Acoustic front-end: MFCC extraction, delta appending, per-speaker
//! cepstral mean normalization, and fixed-length segmentation.
//!
//! The synthetic-corpus path bypasses MFCC extraction (features are
//! generated directly); [`compute_mfcc`] exists for real-audio use.

mod mfcc;
mod wav;

pub use mfcc::{compute_mfcc, MfccConfig};
pub use wav::read_wav_mono_16bit;

use crate::corpus::{CorpusError, FeatureArchive, Manifest};
use ndarray::{Array2, Array3};

#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("utterance too short: {samples} samples < one {window} sample window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("segmentation without padding needs T >= l, got T={frames}, l={length}")]
    NotEnoughFrames { frames: usize, length: usize },
    #[error("unsupported wav: {0}")]
    UnsupportedWav(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type FrontendResult<T> = Result<T, FrontendError>;

/// Appends delta and delta-delta blocks: output dim is three times input dim.
///
/// Deltas use the standard regression over +/-2 frames with edge replication:
/// `d_t = sum_k k (f_{t+k} - f_{t-k}) / (2 sum_k k^2)` for k in 1..=2.
pub fn add_deltas(frames: &Array2<f32>) -> Array2<f32> {
    let (t_len, dim) = frames.dim();
    let deltas = delta_block(frames);
    let ddeltas = delta_block(&deltas);
    let mut out = Array2::zeros((t_len, dim * 3));
    for t in 0..t_len {
        for d in 0..dim {
            out[[t, d]] = frames[[t, d]];
            out[[t, dim + d]] = deltas[[t, d]];
            out[[t, 2 * dim + d]] = ddeltas[[t, d]];
        }
    }
    out
}

fn delta_block(frames: &Array2<f32>) -> Array2<f32> {
    let (t_len, dim) = frames.dim();
    let norm: f64 = 2.0 * (1 + 4) as f64; // 2 * sum k^2, k in 1..=2
    let clamp = |t: isize| -> usize { t.clamp(0, t_len as isize - 1) as usize };
    Array2::from_shape_fn((t_len, dim), |(t, d)| {
        let mut acc = 0.0f64;
        for k in 1..=2isize {
            let fwd = frames[[clamp(t as isize + k), d]] as f64;
            let bwd = frames[[clamp(t as isize - k), d]] as f64;
            acc += k as f64 * (fwd - bwd);
        }
        (acc / norm) as f32
    })
}

/// Subtracts each speaker's per-coefficient mean over all of that speaker's
/// frames. Idempotent; leaves every speaker's output mean at zero.
pub fn cmn_per_speaker(
    archive: &FeatureArchive,
    manifest: &Manifest,
) -> FrontendResult<FeatureArchive> {
    use std::collections::HashMap;
    let dim = archive.dim();
    let mut sums: HashMap<&str, (Vec<f64>, usize)> = HashMap::new();
    for r in &manifest.records {
        let frames = archive.get(&r.utterance_id)?;
        let entry = sums
            .entry(r.speaker_id.as_str())
            .or_insert_with(|| (vec![0.0; dim], 0));
        for row in frames.rows() {
            for (d, &v) in row.iter().enumerate() {
                entry.0[d] += v as f64;
            }
        }
        entry.1 += frames.nrows();
    }
    let means: HashMap<&str, Vec<f64>> = sums
        .into_iter()
        .map(|(spk, (sum, n))| (spk, sum.iter().map(|v| v / n as f64).collect()))
        .collect();

    let mut out = FeatureArchive::new(dim);
    for r in &manifest.records {
        let frames = archive.get(&r.utterance_id)?;
        let mean = &means[r.speaker_id.as_str()];
        let normalized = Array2::from_shape_fn(frames.dim(), |(t, d)| {
            (frames[[t, d]] as f64 - mean[d]) as f32
        });
        out.insert(&r.utterance_id, normalized)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaddingMode {
    /// Pad `ceil((l-1)/2)` copies of the first frame in front and
    /// `floor((l-1)/2)` copies of the last frame behind, so that with
    /// shift 1 each of the T segments is centered on one original frame.
    MatchLength,
    /// No padding; requires T >= l.
    None,
}

/// Fixed-length segments cut from one utterance.
#[derive(Debug, Clone)]
pub struct SegmentBatch {
    /// S x l x D.
    pub segments: Array3<f32>,
    pub source_utterance: String,
    /// Start index of each segment in the (padded) frame sequence.
    pub segment_offsets: Vec<usize>,
}

impl SegmentBatch {
    pub fn num_segments(&self) -> usize {
        self.segments.dim().0
    }
}

/// Cuts `l`-frame segments every `shift` frames.
pub fn segment_utterance(
    frames: &Array2<f32>,
    utterance_id: &str,
    l: usize,
    shift: usize,
    mode: PaddingMode,
) -> FrontendResult<SegmentBatch> {
    if l == 0 || shift == 0 {
        return Err(FrontendError::InvalidConfig(
            "segment length and shift must be >= 1".into(),
        ));
    }
    let (t_len, dim) = frames.dim();
    let padded: Array2<f32> = match mode {
        PaddingMode::MatchLength => {
            if shift != 1 {
                return Err(FrontendError::InvalidConfig(
                    "match-length padding is defined for shift = 1".into(),
                ));
            }
            let front = (l - 1).div_ceil(2);
            let back = (l - 1) / 2;
            let mut padded = Array2::zeros((t_len + front + back, dim));
            for t in 0..front {
                padded.row_mut(t).assign(&frames.row(0));
            }
            for t in 0..t_len {
                padded.row_mut(front + t).assign(&frames.row(t));
            }
            for t in 0..back {
                padded.row_mut(front + t_len + t).assign(&frames.row(t_len - 1));
            }
            padded
        }
        PaddingMode::None => {
            if t_len < l {
                return Err(FrontendError::NotEnoughFrames {
                    frames: t_len,
                    length: l,
                });
            }
            frames.clone()
        }
    };
    let padded_len = padded.nrows();
    let count = (padded_len - l) / shift + 1;
    let mut segments = Array3::zeros((count, l, dim));
    let mut segment_offsets = Vec::with_capacity(count);
    for s in 0..count {
        let start = s * shift;
        segment_offsets.push(start);
        for t in 0..l {
            for d in 0..dim {
                segments[[s, t, d]] = padded[[start + t, d]];
            }
        }
    }
    Ok(SegmentBatch {
        segments,
        source_utterance: utterance_id.to_string(),
        segment_offsets,
    })
}
