//! MFCC extraction: preemphasis, Hamming window, power spectrum, triangular
//! mel filterbank, log compression, orthonormal DCT-II. C0 is kept as the
//! first coefficient.

use super::{FrontendError, FrontendResult};
use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    /// Analysis window in seconds.
    pub window: f64,
    /// Hop in seconds.
    pub hop: f64,
    pub num_mel_filters: usize,
    pub num_ceps: usize,
    pub preemphasis: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            sample_rate: 16_000,
            window: 0.025,
            hop: 0.010,
            num_mel_filters: 23,
            num_ceps: 13,
            preemphasis: 0.97,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> FrontendResult<()> {
        if self.sample_rate == 0 {
            return Err(FrontendError::InvalidConfig("sample_rate must be > 0".into()));
        }
        if !(self.window > self.hop && self.hop > 0.0) {
            return Err(FrontendError::InvalidConfig(
                "need window > hop > 0".into(),
            ));
        }
        if self.num_ceps > self.num_mel_filters {
            return Err(FrontendError::InvalidConfig(
                "num_ceps must not exceed num_mel_filters".into(),
            ));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window * self.sample_rate as f64).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop * self.sample_rate as f64).round() as usize
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over FFT bins, apexes equally spaced on the mel scale
/// between 0 Hz and Nyquist. Returns num_filters x num_bins weights.
pub(crate) fn mel_filterbank(
    num_filters: usize,
    nfft: usize,
    sample_rate: f64,
) -> Vec<Vec<f64>> {
    let num_bins = nfft / 2 + 1;
    let mel_hi = hz_to_mel(sample_rate / 2.0);
    let points: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(mel_hi * i as f64 / (num_filters + 1) as f64))
        .collect();
    let bin_hz = sample_rate / nfft as f64;
    (0..num_filters)
        .map(|m| {
            let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
            (0..num_bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f < center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    };
                    w.max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II of the log filterbank energies, first num_ceps rows.
pub(crate) fn dct_matrix(num_ceps: usize, num_filters: usize) -> Vec<Vec<f64>> {
    let m = num_filters as f64;
    (0..num_ceps)
        .map(|k| {
            let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
            (0..num_filters)
                .map(|n| {
                    scale
                        * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / m).cos()
                })
                .collect()
        })
        .collect()
}

/// Computes T x num_ceps MFCCs with T = floor((len - window)/hop) + 1.
pub fn compute_mfcc(waveform: &[f32], cfg: &MfccConfig) -> FrontendResult<Array2<f32>> {
    cfg.validate()?;
    let win = cfg.window_samples();
    let hop = cfg.hop_samples();
    if waveform.len() < win {
        return Err(FrontendError::TooShort {
            samples: waveform.len(),
            window: win,
        });
    }

    // Preemphasis over the whole signal; the first sample keeps Kaldi's
    // convention x[0] - coef * x[0].
    let mut emphasized = Vec::with_capacity(waveform.len());
    emphasized.push(waveform[0] as f64 - cfg.preemphasis * waveform[0] as f64);
    for t in 1..waveform.len() {
        emphasized.push(waveform[t] as f64 - cfg.preemphasis * waveform[t - 1] as f64);
    }

    let nfft = win.next_power_of_two();
    let num_frames = (waveform.len() - win) / hop + 1;
    let hamming: Vec<f64> = (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1) as f64).cos())
        .collect();
    let filters = mel_filterbank(cfg.num_mel_filters, nfft, cfg.sample_rate as f64);
    let dct = dct_matrix(cfg.num_ceps, cfg.num_mel_filters);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(nfft);
    let mut out = Array2::zeros((num_frames, cfg.num_ceps));
    let mut buffer = vec![Complex::new(0.0, 0.0); nfft];

    for frame in 0..num_frames {
        let start = frame * hop;
        for i in 0..nfft {
            let v = if i < win {
                emphasized[start + i] * hamming[i]
            } else {
                0.0
            };
            buffer[i] = Complex::new(v, 0.0);
        }
        fft.process(&mut buffer);
        let power: Vec<f64> = buffer[..nfft / 2 + 1]
            .iter()
            .map(|c| c.norm_sqr())
            .collect();
        let log_energies: Vec<f64> = filters
            .iter()
            .map(|f| {
                let e: f64 = f.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(1e-10).ln()
            })
            .collect();
        for (k, row) in dct.iter().enumerate() {
            let c: f64 = row.iter().zip(&log_energies).map(|(w, e)| w * e).sum();
            out[[frame, k]] = c as f32;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_count_matches_formula() {
        let cfg = MfccConfig::default();
        let wave = vec![0.01f32; 16_000];
        let out = compute_mfcc(&wave, &cfg).unwrap();
        assert_eq!(out.nrows(), 98); // floor((16000 - 400)/160) + 1
        assert_eq!(out.ncols(), 13);
    }

    #[test]
    fn short_waveform_is_rejected() {
        let cfg = MfccConfig::default();
        let err = compute_mfcc(&vec![0.0f32; 399], &cfg);
        assert!(matches!(err, Err(FrontendError::TooShort { .. })));
    }

    #[test]
    fn silence_yields_identical_frames() {
        let cfg = MfccConfig::default();
        let out = compute_mfcc(&vec![0.0f32; 4000], &cfg).unwrap();
        let first = out.row(0).to_owned();
        for row in out.rows() {
            for (a, b) in row.iter().zip(first.iter()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn determinism() {
        let cfg = MfccConfig::default();
        let wave: Vec<f32> = (0..8000)
            .map(|i| (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 16000.0).sin())
            .collect();
        let a = compute_mfcc(&wave, &cfg).unwrap();
        let b = compute_mfcc(&wave, &cfg).unwrap();
        assert_eq!(a, b);
    }

    // Independent straight-line reference: naive DFT, same filterbank math
    // written from the definitions.
    fn reference_mfcc(waveform: &[f32], cfg: &MfccConfig) -> Vec<Vec<f64>> {
        let win = cfg.window_samples();
        let hop = cfg.hop_samples();
        let nfft = win.next_power_of_two();
        let sr = cfg.sample_rate as f64;

        let mut pre = vec![waveform[0] as f64 * (1.0 - cfg.preemphasis)];
        for t in 1..waveform.len() {
            pre.push(waveform[t] as f64 - cfg.preemphasis * waveform[t - 1] as f64);
        }
        let num_frames = (waveform.len() - win) / hop + 1;
        let mut result = Vec::new();
        for frame in 0..num_frames {
            let start = frame * hop;
            let mut windowed = vec![0.0f64; nfft];
            for i in 0..win {
                let w =
                    0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (win - 1) as f64).cos();
                windowed[i] = pre[start + i] * w;
            }
            // O(n^2) DFT.
            let mut power = Vec::new();
            for k in 0..=nfft / 2 {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for (n, &x) in windowed.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * k as f64 * n as f64 / nfft as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                power.push(re * re + im * im);
            }
            // Triangular mel filters from the textbook definition.
            let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
            let imel = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
            let top = mel(sr / 2.0);
            let edges: Vec<f64> = (0..cfg.num_mel_filters + 2)
                .map(|i| imel(top * i as f64 / (cfg.num_mel_filters + 1) as f64))
                .collect();
            let mut log_e = Vec::new();
            for m in 0..cfg.num_mel_filters {
                let mut e = 0.0;
                for (k, &p) in power.iter().enumerate() {
                    let f = k as f64 * sr / nfft as f64;
                    let w = if f >= edges[m] && f <= edges[m + 1] {
                        (f - edges[m]) / (edges[m + 1] - edges[m])
                    } else if f > edges[m + 1] && f <= edges[m + 2] {
                        (edges[m + 2] - f) / (edges[m + 2] - edges[m + 1])
                    } else {
                        0.0
                    };
                    e += w * p;
                }
                log_e.push(e.max(1e-10).ln());
            }
            let mf = cfg.num_mel_filters as f64;
            let mut ceps = Vec::new();
            for k in 0..cfg.num_ceps {
                let scale = if k == 0 { (1.0 / mf).sqrt() } else { (2.0 / mf).sqrt() };
                let mut c = 0.0;
                for (n, &e) in log_e.iter().enumerate() {
                    c += e * (std::f64::consts::PI * k as f64 * (n as f64 + 0.5) / mf).cos();
                }
                ceps.push(scale * c);
            }
            result.push(ceps);
        }
        result
    }

    #[test]
    fn matches_straight_line_reference_on_sinusoid() {
        let cfg = MfccConfig::default();
        let wave: Vec<f32> = (0..2400)
            .map(|i| 0.5 * (2.0 * std::f32::consts::PI * 440.0 * i as f32 / 16000.0).sin())
            .collect();
        let got = compute_mfcc(&wave, &cfg).unwrap();
        let expected = reference_mfcc(&wave, &cfg);
        assert_eq!(got.nrows(), expected.len());
        for (t, row) in expected.iter().enumerate() {
            for (d, &e) in row.iter().enumerate() {
                let g = got[[t, d]] as f64;
                assert!(
                    (g - e).abs() <= 1e-4,
                    "frame {t} coeff {d}: got {g}, reference {e}"
                );
            }
        }
    }
}
