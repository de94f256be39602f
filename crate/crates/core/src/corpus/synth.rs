//! Synthetic speech-like corpus with known ground truth.
//!
//! Linguistic content is a per-phone mean vector, speaker identity a
//! per-speaker constant offset: frame t of phone p spoken by speaker s is
//! `m_p + o_s + eps` with `eps ~ N(0, noise^2 I)`. That makes
//! "speaker-invariant" well-defined for oracle tests: a perfect
//! speaker-invariant representation depends on `m_p` only.

use super::{
    CorpusError, CorpusResult, FeatureArchive, LabelArchive, Manifest, SplitTag, UtteranceRecord,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_languages: usize,
    pub num_speakers_per_language: usize,
    pub num_phones: usize,
    /// Utterances generated per language.
    pub num_utterances: usize,
    pub phones_per_utterance: usize,
    /// Inclusive (min, max) phone duration in frames.
    pub frames_per_phone_range: (usize, usize),
    pub feature_dim: usize,
    pub speaker_offset_scale: f64,
    pub emission_noise_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_languages: 1,
            num_speakers_per_language: 4,
            num_phones: 8,
            num_utterances: 40,
            phones_per_utterance: 10,
            frames_per_phone_range: (4, 9),
            feature_dim: 12,
            speaker_offset_scale: 1.0,
            emission_noise_scale: 0.3,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> CorpusResult<()> {
        let counts = [
            ("num_languages", self.num_languages),
            ("num_speakers_per_language", self.num_speakers_per_language),
            ("num_phones", self.num_phones),
            ("num_utterances", self.num_utterances),
            ("phones_per_utterance", self.phones_per_utterance),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(CorpusError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        let (lo, hi) = self.frames_per_phone_range;
        if lo == 0 || lo > hi {
            return Err(CorpusError::InvalidConfig(format!(
                "frames_per_phone_range ({lo}, {hi}) needs 1 <= min <= max"
            )));
        }
        if self.speaker_offset_scale < 0.0 || self.emission_noise_scale < 0.0 {
            return Err(CorpusError::InvalidConfig("scales must be >= 0".into()));
        }
        Ok(())
    }
}

/// Generation-time ground truth: the phone means and speaker offsets.
#[derive(Debug, Clone)]
pub struct SpeakerTruth {
    /// num_phones x feature_dim.
    pub phone_means: Array2<f64>,
    pub speaker_offsets: BTreeMap<String, Vec<f64>>,
}

/// Generates a corpus fully determined by `cfg.seed`.
///
/// Speakers are disjoint across languages; utterances are assigned to a
/// language's speakers round-robin so every speaker is covered when
/// `num_utterances >= num_speakers_per_language`.
pub fn generate_synthetic_corpus(
    cfg: &SynthConfig,
) -> CorpusResult<(Manifest, FeatureArchive, LabelArchive, SpeakerTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let phone_means = Array2::from_shape_fn((cfg.num_phones, cfg.feature_dim), |_| {
        std_normal.sample(&mut rng)
    });

    let mut speaker_offsets = BTreeMap::new();
    let mut speaker_ids = Vec::new();
    for li in 0..cfg.num_languages {
        for si in 0..cfg.num_speakers_per_language {
            let id = format!("lang{li}-spk{si}");
            let offset: Vec<f64> = (0..cfg.feature_dim)
                .map(|_| std_normal.sample(&mut rng) * cfg.speaker_offset_scale)
                .collect();
            speaker_offsets.insert(id.clone(), offset);
            speaker_ids.push(id);
        }
    }

    let mut records = Vec::new();
    let mut features = FeatureArchive::new(cfg.feature_dim);
    let mut labels = LabelArchive::new();
    let (dur_lo, dur_hi) = cfg.frames_per_phone_range;

    for li in 0..cfg.num_languages {
        let language_id = format!("lang{li}");
        for ui in 0..cfg.num_utterances {
            let si = ui % cfg.num_speakers_per_language;
            let speaker_id = &speaker_ids[li * cfg.num_speakers_per_language + si];
            let utterance_id = format!("{speaker_id}-utt{ui:04}");
            let offset = &speaker_offsets[speaker_id];

            let mut frame_rows: Vec<f32> = Vec::new();
            let mut frame_labels: Vec<i32> = Vec::new();
            for _ in 0..cfg.phones_per_utterance {
                let phone = rng.random_range(0..cfg.num_phones);
                let duration = rng.random_range(dur_lo..=dur_hi);
                for _ in 0..duration {
                    for d in 0..cfg.feature_dim {
                        let noise = std_normal.sample(&mut rng) * cfg.emission_noise_scale;
                        frame_rows.push((phone_means[[phone, d]] + offset[d] + noise) as f32);
                    }
                    frame_labels.push(phone as i32);
                }
            }
            let num_frames = frame_labels.len();
            let matrix = Array2::from_shape_vec((num_frames, cfg.feature_dim), frame_rows)
                .expect("row count matches");
            features.insert(&utterance_id, matrix)?;
            labels.insert(&utterance_id, frame_labels)?;
            records.push(UtteranceRecord {
                utterance_id,
                speaker_id: speaker_id.clone(),
                language_id: language_id.clone(),
                num_frames,
            });
        }
    }

    let manifest = Manifest::new(records, SplitTag::Train)?;
    let truth = SpeakerTruth {
        phone_means,
        speaker_offsets,
    };
    Ok((manifest, features, labels, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::check_consistency;

    #[test]
    fn zero_noise_zero_offset_frames_equal_phone_means() {
        let cfg = SynthConfig {
            speaker_offset_scale: 0.0,
            emission_noise_scale: 0.0,
            num_utterances: 4,
            ..SynthConfig::default()
        };
        let (manifest, features, labels, truth) = generate_synthetic_corpus(&cfg).unwrap();
        for r in &manifest.records {
            let frames = features.get(&r.utterance_id).unwrap();
            let l = labels.get(&r.utterance_id).unwrap();
            for (t, &phone) in l.iter().enumerate() {
                for d in 0..cfg.feature_dim {
                    let expected = truth.phone_means[[phone as usize, d]] as f32;
                    assert_eq!(frames[[t, d]], expected);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig::default();
        let (m1, f1, l1, _) = generate_synthetic_corpus(&cfg).unwrap();
        let (m2, f2, l2, _) = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(f1, f2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn label_count_and_duration_bounds() {
        let cfg = SynthConfig {
            num_phones: 3,
            num_utterances: 20,
            frames_per_phone_range: (5, 10),
            ..SynthConfig::default()
        };
        let (manifest, features, labels, _) = generate_synthetic_corpus(&cfg).unwrap();
        check_consistency(&manifest, &features, Some(&labels)).unwrap();

        let mut seen = std::collections::HashSet::new();
        for (_, l) in labels.iter() {
            seen.extend(l.iter().copied());
        }
        assert_eq!(seen.len(), 3);

        let lo = cfg.phones_per_utterance * 5;
        let hi = cfg.phones_per_utterance * 10;
        for r in &manifest.records {
            assert!(r.num_frames >= lo && r.num_frames <= hi);
        }
    }

    #[test]
    fn speaker_offsets_separate_same_phone_frames() {
        // Mean distance between same-phone frames of different speakers must
        // strictly exceed the zero-offset case.
        let base = SynthConfig {
            num_utterances: 10,
            emission_noise_scale: 0.1,
            seed: 3,
            ..SynthConfig::default()
        };
        let with_offset = SynthConfig {
            speaker_offset_scale: 2.0,
            ..base.clone()
        };
        let without_offset = SynthConfig {
            speaker_offset_scale: 0.0,
            ..base
        };
        let d_with = mean_cross_speaker_same_phone_distance(&with_offset);
        let d_without = mean_cross_speaker_same_phone_distance(&without_offset);
        assert!(
            d_with > d_without,
            "expected {d_with} > {d_without} with speaker offsets"
        );
    }

    fn mean_cross_speaker_same_phone_distance(cfg: &SynthConfig) -> f64 {
        let (manifest, features, labels, _) = generate_synthetic_corpus(cfg).unwrap();
        // Per (speaker, phone) mean frame.
        let mut sums: BTreeMap<(String, i32), (Vec<f64>, usize)> = BTreeMap::new();
        for r in &manifest.records {
            let frames = features.get(&r.utterance_id).unwrap();
            let l = labels.get(&r.utterance_id).unwrap();
            for (t, &phone) in l.iter().enumerate() {
                let entry = sums
                    .entry((r.speaker_id.clone(), phone))
                    .or_insert_with(|| (vec![0.0; cfg.feature_dim], 0));
                for d in 0..cfg.feature_dim {
                    entry.0[d] += frames[[t, d]] as f64;
                }
                entry.1 += 1;
            }
        }
        let means: Vec<((String, i32), Vec<f64>)> = sums
            .into_iter()
            .map(|((s, p), (sum, n))| ((s, p), sum.iter().map(|v| v / n as f64).collect()))
            .collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, ((s1, p1), m1)) in means.iter().enumerate() {
            for ((s2, p2), m2) in means.iter().skip(i + 1) {
                if p1 == p2 && s1 != s2 {
                    let d: f64 = m1
                        .iter()
                        .zip(m2)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    total += d;
                    count += 1;
                }
            }
        }
        total / count as f64
    }
}
