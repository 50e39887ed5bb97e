//! Spectral-difference audio fingerprints.
//!
//! Audio is resampled, cut into heavily overlapping Hann-windowed frames and
//! reduced to the energies of 33 logarithmically spaced bands. Each pair of
//! consecutive frames yields one 32-bit sub-fingerprint whose bit `m` records
//! the sign of the time derivative of the energy difference between bands
//! `m` and `m + 1`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{resample, PcmAudio};
use crate::model::SongId;

pub const BAND_COUNT: usize = 33;
pub const BITS: u32 = 32;

/// Band energy differences smaller than this fraction of the two frames'
/// total energy count as zero. Keeps stationary input at all-zero words
/// despite floating-point noise in the transform.
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

pub type BandEnergies = [f64; BAND_COUNT];

/// One 32-bit sub-fingerprint.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SubFingerprint(pub u32);

impl SubFingerprint {
    pub fn hamming(self, other: SubFingerprint) -> u32 {
        (self.0 ^ other.0).count_ones()
    }

    pub fn flip(self, bit: u32) -> SubFingerprint {
        SubFingerprint(self.0 ^ (1 << bit))
    }

    pub fn bit(self, m: u32) -> bool {
        self.0 >> m & 1 == 1
    }
}

impl fmt::Debug for SubFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", self.0)
    }
}

/// Ordered sub-fingerprints of one song (or of a query when `song` is `None`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FingerprintSequence {
    pub song: Option<SongId>,
    pub subfps: Vec<SubFingerprint>,
}

impl FingerprintSequence {
    pub fn query(subfps: Vec<SubFingerprint>) -> Self {
        Self { song: None, subfps }
    }

    pub fn len(&self) -> usize {
        self.subfps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subfps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub target_rate: u32,
    pub frame_length: usize,
    pub hop: usize,
    pub window: Window,
    pub band_count: usize,
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            target_rate: 5512,
            frame_length: 2048,
            hop: 64,
            window: Window::Hann,
            band_count: BAND_COUNT,
            min_freq_hz: 300.0,
            max_freq_hz: 2000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("band_count must be {BAND_COUNT} to produce 32-bit words, got {0}")]
    BandCount(usize),
    #[error("hop ({hop}) must be positive and shorter than frame_length ({frame_length})")]
    Hop { hop: usize, frame_length: usize },
    #[error("band range {0}..{1} Hz must be increasing and below Nyquist")]
    BandRange(f64, f64),
    #[error("target_rate must be positive")]
    Rate,
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.band_count != BAND_COUNT {
            return Err(ConfigError::BandCount(self.band_count));
        }
        if self.target_rate == 0 {
            return Err(ConfigError::Rate);
        }
        if self.hop == 0 || self.hop >= self.frame_length {
            return Err(ConfigError::Hop {
                hop: self.hop,
                frame_length: self.frame_length,
            });
        }
        let nyquist = f64::from(self.target_rate) / 2.0;
        if !(self.min_freq_hz > 0.0
            && self.min_freq_hz < self.max_freq_hz
            && self.max_freq_hz <= nyquist)
        {
            return Err(ConfigError::BandRange(self.min_freq_hz, self.max_freq_hz));
        }
        Ok(())
    }

    /// `band_count + 1` logarithmically spaced edges from `min_freq_hz` to `max_freq_hz`.
    pub fn band_edges(&self) -> Vec<f64> {
        let ratio = self.max_freq_hz / self.min_freq_hz;
        (0..=self.band_count)
            .map(|i| {
                if i == self.band_count {
                    self.max_freq_hz
                } else {
                    self.min_freq_hz * ratio.powf(i as f64 / self.band_count as f64)
                }
            })
            .collect()
    }

    /// Number of analysis frames for a signal of `len` samples at `target_rate`.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_length {
            0
        } else {
            (len - self.frame_length) / self.hop + 1
        }
    }

    /// Periodic Hann window.
    pub fn window_coefficients(&self) -> Vec<f64> {
        let n = self.frame_length as f64;
        (0..self.frame_length)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
            .collect()
    }

    /// Inclusive-exclusive ranges of FFT bin indices per band. A bin belongs
    /// to band `b` when its center frequency lies in `[edge_b, edge_{b+1})`.
    pub fn band_bins(&self) -> Vec<std::ops::Range<usize>> {
        let edges = self.band_edges();
        let bin_hz = f64::from(self.target_rate) / self.frame_length as f64;
        let half = self.frame_length / 2;
        (0..self.band_count)
            .map(|b| {
                let in_band = |k: &usize| {
                    let f = *k as f64 * bin_hz;
                    f >= edges[b] && f < edges[b + 1]
                };
                let start = (0..=half).find(in_band).unwrap_or(0);
                let end = (start..=half).take_while(in_band).last().map_or(start, |k| k + 1);
                start..end
            })
            .collect()
    }
}

/// Bit `m` is set iff the band-difference `(cur[m] - cur[m+1]) - (prev[m] - prev[m+1])`
/// is positive, beyond the relative tolerance.
pub fn derive_bits(current: &BandEnergies, previous: &BandEnergies) -> SubFingerprint {
    let total: f64 = current.iter().chain(previous.iter()).sum();
    let tolerance = RELATIVE_TOLERANCE * total;
    let mut word = 0u32;
    for m in 0..BAND_COUNT - 1 {
        let d = (current[m] - current[m + 1]) - (previous[m] - previous[m + 1]);
        if d > tolerance {
            word |= 1 << m;
        }
    }
    SubFingerprint(word)
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("audio too short: {frames} analysis frame(s), at least 2 needed")]
    TooShort { frames: usize },
}

/// Turns audio into a sub-fingerprint sequence. Implementations must be
/// deterministic.
pub trait FingerprintExtractor: Send + Sync {
    fn extract(&self, audio: &PcmAudio) -> Result<FingerprintSequence, ExtractError>;
}

/// Spectral band-energy difference extractor.
#[derive(Clone)]
pub struct SpectralExtractor {
    config: ExtractorConfig,
    window: Vec<f64>,
    bins: Vec<std::ops::Range<usize>>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralExtractor")
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl SpectralExtractor {
    pub fn new(config: ExtractorConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(config.frame_length);
        Ok(Self {
            window: config.window_coefficients(),
            bins: config.band_bins(),
            fft,
            config,
        })
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    /// Windows `frame` and returns the energy of each band.
    pub fn band_energies(&self, frame: &[f32]) -> BandEnergies {
        let mut buf = Vec::new();
        let mut scratch = Vec::new();
        self.band_energies_with(frame, &mut buf, &mut scratch)
    }

    fn band_energies_with(
        &self,
        frame: &[f32],
        buf: &mut Vec<Complex<f64>>,
        scratch: &mut Vec<Complex<f64>>,
    ) -> BandEnergies {
        assert_eq!(frame.len(), self.config.frame_length, "frame length");
        buf.clear();
        buf.extend(
            frame
                .iter()
                .zip(&self.window)
                .map(|(&x, &w)| Complex::new(f64::from(x) * w, 0.0)),
        );
        scratch.resize(self.fft.get_inplace_scratch_len(), Complex::default());
        self.fft.process_with_scratch(buf, scratch);

        let mut energies = [0.0; BAND_COUNT];
        for (e, range) in energies.iter_mut().zip(&self.bins) {
            *e = kahan_sum(buf[range.clone()].iter().map(|c| c.norm_sqr()));
        }
        energies
    }
}

impl FingerprintExtractor for SpectralExtractor {
    fn extract(&self, audio: &PcmAudio) -> Result<FingerprintSequence, ExtractError> {
        let audio = resample(audio, self.config.target_rate);
        let frames = self.config.frame_count(audio.len());
        if frames < 2 {
            return Err(ExtractError::TooShort { frames });
        }
        let hop = self.config.hop;
        let len = self.config.frame_length;
        let energies: Vec<BandEnergies> = (0..frames)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(buf, scratch), i| {
                    self.band_energies_with(&audio.samples[i * hop..i * hop + len], buf, scratch)
                },
            )
            .collect();
        let subfps = energies
            .windows(2)
            .map(|pair| derive_bits(&pair[1], &pair[0]))
            .collect();
        Ok(FingerprintSequence::query(subfps))
    }
}

/// Golden-file text: a `# config <digest>` header, then one hex word per line.
pub fn write_golden(digest: &str, seq: &[SubFingerprint]) -> String {
    let mut out = format!("# config {digest}\n");
    for w in seq {
        out.push_str(&format!("{:08x}\n", w.0));
    }
    out
}

#[derive(Debug, thiserror::Error)]
#[error("malformed golden file at line {line}")]
pub struct GoldenError {
    pub line: usize,
}

/// Parses [`write_golden`] output into `(digest, words)`.
pub fn read_golden(text: &str) -> Result<(String, Vec<SubFingerprint>), GoldenError> {
    let mut lines = text.lines();
    let digest = lines
        .next()
        .and_then(|l| l.strip_prefix("# config "))
        .ok_or(GoldenError { line: 1 })?
        .trim()
        .to_string();
    let words = lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            u32::from_str_radix(l.trim(), 16)
                .map(SubFingerprint)
                .map_err(|_| GoldenError { line: i + 2 })
        })
        .collect::<Result<_, _>>()?;
    Ok((digest, words))
}
