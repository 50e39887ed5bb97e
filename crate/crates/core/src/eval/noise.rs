use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::PcmAudio;

/// White-noise level and seed. `snr_db = +inf` adds nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("signal has zero power; SNR is undefined")]
    ZeroPower,
    #[error("SNR must be a number or +inf, got {0}")]
    BadSnr(f64),
}

/// Zero-mean uniform noise whose mean square is exactly `power`.
pub fn white_noise(len: usize, power: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw_power = raw.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64;
    if raw_power == 0.0 {
        return raw;
    }
    let scale = (power / raw_power).sqrt();
    raw.into_iter().map(|x| x * scale).collect()
}

/// Adds uniform white noise at `spec.snr_db` relative to the signal's
/// power, then clips to `[-1, 1]`.
pub fn add_white_noise(audio: &PcmAudio, spec: NoiseSpec) -> Result<PcmAudio, NoiseError> {
    if spec.snr_db == f64::INFINITY {
        return Ok(audio.clone());
    }
    if !spec.snr_db.is_finite() {
        return Err(NoiseError::BadSnr(spec.snr_db));
    }
    let signal_power = audio.power();
    if signal_power == 0.0 {
        return Err(NoiseError::ZeroPower);
    }
    let noise_power = signal_power / 10f64.powf(spec.snr_db / 10.0);
    let noise = white_noise(audio.len(), noise_power, spec.seed);
    let samples = audio
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (f64::from(s) + n).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(PcmAudio::new(samples, audio.sample_rate))
}
