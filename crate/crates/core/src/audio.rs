//! Mono PCM audio, WAV decoding and resampling.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

/// Mono audio with samples in `[-1.0, 1.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcmAudio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl PcmAudio {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
        sum / self.samples.len() as f64
    }

    pub fn slice(&self, start: usize, len: usize) -> PcmAudio {
        let end = (start + len).min(self.samples.len());
        let start = start.min(end);
        PcmAudio::new(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub fn scaled(&self, gain: f32) -> PcmAudio {
        PcmAudio::new(
            self.samples.iter().map(|&s| (s * gain).clamp(-1.0, 1.0)).collect(),
            self.sample_rate,
        )
    }

    /// Encodes as 16-bit mono PCM WAV.
    pub fn to_wav_i16(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        write_wav(spec, |w| {
            for &s in &self.samples {
                let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v)?;
            }
            Ok(())
        })
    }

    /// Encodes as 32-bit float mono WAV; decoding gives back the same samples.
    pub fn to_wav_f32(&self) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        write_wav(spec, |w| {
            for &s in &self.samples {
                w.write_sample(s)?;
            }
            Ok(())
        })
    }
}

fn write_wav(
    spec: hound::WavSpec,
    body: impl FnOnce(&mut hound::WavWriter<&mut Cursor<Vec<u8>>>) -> hound::Result<()>,
) -> Vec<u8> {
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory WAV writer");
        body(&mut writer).expect("in-memory WAV write");
        writer.finalize().expect("in-memory WAV finalize");
    }
    cursor.into_inner()
}

#[derive(Debug, thiserror::Error)]
pub enum WavError {
    #[error("unsupported WAV encoding: {0}")]
    Unsupported(String),
    #[error("corrupt WAV container: {0}")]
    Corrupt(String),
}

impl From<hound::Error> for WavError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::Unsupported => WavError::Unsupported("non-PCM or unknown format".into()),
            hound::Error::TooWide => WavError::Unsupported("sample width".into()),
            hound::Error::IoError(io) => WavError::Corrupt(io.to_string()),
            other => WavError::Corrupt(other.to_string()),
        }
    }
}

/// Decodes PCM WAV bytes (8/16/24/32-bit integer or 32-bit float, mono or
/// stereo) into mono audio. Stereo is averaged; integers are divided by
/// `2^(bits-1)`.
pub fn decode_wav(bytes: &[u8]) -> Result<PcmAudio, WavError> {
    let mut reader = hound::WavReader::new(Cursor::new(bytes))?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if !(1..=2).contains(&channels) {
        return Err(WavError::Unsupported(format!("{channels} channels")));
    }
    if spec.sample_rate == 0 {
        return Err(WavError::Corrupt("zero sample rate".into()));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<_, _>>()?,
        (hound::SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (f64::from(v) * scale) as f32))
                .collect::<Result<_, _>>()?
        }
        (format, bits) => {
            return Err(WavError::Unsupported(format!("{format:?} at {bits} bits")));
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(WavError::Corrupt("partial sample frame".into()));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|lr| ((f64::from(lr[0]) + f64::from(lr[1])) / 2.0) as f32)
            .collect()
    };
    let samples = samples.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    Ok(PcmAudio::new(samples, spec.sample_rate))
}

/// Linear-interpolation resampling.
///
/// Output sample `j` sits at source position `j * source / target`; the
/// output has `floor((len - 1) * target / source) + 1` samples so the last
/// position never passes the final input sample.
pub fn resample(audio: &PcmAudio, target_rate: u32) -> PcmAudio {
    assert!(target_rate > 0, "target rate must be positive");
    let source_rate = audio.sample_rate;
    if source_rate == target_rate || audio.samples.is_empty() {
        return PcmAudio::new(audio.samples.clone(), target_rate);
    }
    let src = u64::from(source_rate);
    let dst = u64::from(target_rate);
    let n = audio.samples.len() as u64;
    let out_len = (n - 1) * dst / src + 1;
    let x = &audio.samples;
    let samples = (0..out_len)
        .map(|j| {
            let num = j * src;
            let i = (num / dst) as usize;
            let frac = (num % dst) as f64 / dst as f64;
            let a = f64::from(x[i]);
            if frac == 0.0 || i + 1 >= x.len() {
                a as f32
            } else {
                let b = f64::from(x[i + 1]);
                (a + (b - a) * frac) as f32
            }
        })
        .collect();
    PcmAudio::new(samples, target_rate)
}
