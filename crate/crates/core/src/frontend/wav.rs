//! Minimal RIFF/WAVE reader for 16-bit PCM mono files.

use super::{FrontendError, FrontendResult};
use byteorder::{LittleEndian, ReadBytesExt};
use std::io::Read;

/// Reads a 16-bit PCM mono WAV stream; returns samples in [-1, 1] and the
/// sample rate.
pub fn read_wav_mono_16bit<R: Read>(mut source: R) -> FrontendResult<(Vec<f32>, u32)> {
    let mut riff = [0u8; 4];
    source.read_exact(&mut riff)?;
    if &riff != b"RIFF" {
        return Err(FrontendError::UnsupportedWav("missing RIFF header".into()));
    }
    let _file_size = source.read_u32::<LittleEndian>()?;
    let mut wave = [0u8; 4];
    source.read_exact(&mut wave)?;
    if &wave != b"WAVE" {
        return Err(FrontendError::UnsupportedWav("missing WAVE tag".into()));
    }

    let mut sample_rate = None;
    loop {
        let mut chunk_id = [0u8; 4];
        if source.read_exact(&mut chunk_id).is_err() {
            return Err(FrontendError::UnsupportedWav("no data chunk".into()));
        }
        let chunk_size = source.read_u32::<LittleEndian>()? as usize;
        match &chunk_id {
            b"fmt " => {
                let mut fmt = vec![0u8; chunk_size];
                source.read_exact(&mut fmt)?;
                let mut f = fmt.as_slice();
                let audio_format = f.read_u16::<LittleEndian>()?;
                let channels = f.read_u16::<LittleEndian>()?;
                let rate = f.read_u32::<LittleEndian>()?;
                let _byte_rate = f.read_u32::<LittleEndian>()?;
                let _block_align = f.read_u16::<LittleEndian>()?;
                let bits = f.read_u16::<LittleEndian>()?;
                if audio_format != 1 {
                    return Err(FrontendError::UnsupportedWav(format!(
                        "format {audio_format} is not PCM"
                    )));
                }
                if channels != 1 {
                    return Err(FrontendError::UnsupportedWav(format!(
                        "{channels} channels, expected mono"
                    )));
                }
                if bits != 16 {
                    return Err(FrontendError::UnsupportedWav(format!(
                        "{bits}-bit samples, expected 16"
                    )));
                }
                sample_rate = Some(rate);
            }
            b"data" => {
                let rate = sample_rate.ok_or_else(|| {
                    FrontendError::UnsupportedWav("data chunk before fmt".into())
                })?;
                let n = chunk_size / 2;
                let mut samples = Vec::with_capacity(n);
                for _ in 0..n {
                    let s = source.read_i16::<LittleEndian>()?;
                    samples.push(s as f32 / 32768.0);
                }
                return Ok((samples, rate));
            }
            _ => {
                // Skip unknown chunks (plus pad byte for odd sizes).
                let skip = chunk_size + (chunk_size & 1);
                std::io::copy(&mut source.by_ref().take(skip as u64), &mut std::io::sink())?;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use byteorder::WriteBytesExt;

    fn make_wav(samples: &[i16], rate: u32) -> Vec<u8> {
        let mut buf = Vec::new();
        let data_len = samples.len() * 2;
        buf.extend_from_slice(b"RIFF");
        buf.write_u32::<LittleEndian>(36 + data_len as u32).unwrap();
        buf.extend_from_slice(b"WAVE");
        buf.extend_from_slice(b"fmt ");
        buf.write_u32::<LittleEndian>(16).unwrap();
        buf.write_u16::<LittleEndian>(1).unwrap(); // PCM
        buf.write_u16::<LittleEndian>(1).unwrap(); // mono
        buf.write_u32::<LittleEndian>(rate).unwrap();
        buf.write_u32::<LittleEndian>(rate * 2).unwrap();
        buf.write_u16::<LittleEndian>(2).unwrap();
        buf.write_u16::<LittleEndian>(16).unwrap();
        buf.extend_from_slice(b"data");
        buf.write_u32::<LittleEndian>(data_len as u32).unwrap();
        for &s in samples {
            buf.write_i16::<LittleEndian>(s).unwrap();
        }
        buf
    }

    #[test]
    fn reads_samples_and_rate() {
        let wav = make_wav(&[0, 16384, -16384, 32767], 16_000);
        let (samples, rate) = read_wav_mono_16bit(wav.as_slice()).unwrap();
        assert_eq!(rate, 16_000);
        assert_eq!(samples.len(), 4);
        assert!((samples[1] - 0.5).abs() < 1e-4);
        assert!((samples[2] + 0.5).abs() < 1e-4);
    }

    #[test]
    fn rejects_stereo() {
        let mut wav = make_wav(&[0, 0], 8000);
        wav[22] = 2; // channel count
        assert!(matches!(
            read_wav_mono_16bit(wav.as_slice()),
            Err(FrontendError::UnsupportedWav(_))
        ));
    }
}
