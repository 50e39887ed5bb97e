//! Deterministic synthetic songs: overlapping tone sequences and chirps
//! with tremolo, plus generated metadata and lyrics.

use std::f64::consts::TAU;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::PcmAudio;
use crate::model::{SongId, SongRecord};

pub const SYNTH_RATE: u32 = 5512;

const WORDS: &[&str] = &[
    "love", "night", "fire", "heart", "river", "dance", "light", "rain", "dream", "road", "shadow",
    "summer", "ocean", "city", "golden", "wild", "silver", "midnight", "thunder", "echo", "stone",
    "feather", "velvet", "neon", "hollow", "winter", "crimson", "paper", "glass", "honey",
    "electric", "lonely", "forever", "broken", "rising", "falling", "morning", "highway", "garden",
    "whisper", "storm", "diamond", "ghost", "mirror", "sugar", "thunderbird", "satellite",
    "horizon", "lantern", "harbor", "canyon", "comet", "orchid", "prairie", "meadow", "ember",
    "tide", "raven", "cobalt", "lullaby", "carousel", "avalanche", "blossom", "compass", "driftwood",
];

const GENRES: &[&str] = &["rock", "pop", "jazz", "folk", "soul", "electronic", "country", "blues"];

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Voice {
    start: usize,
    len: usize,
    freqs: Vec<f64>,
    sweep: f64,
    gain: f64,
    tremolo_hz: f64,
    tremolo_depth: f64,
}

/// A song of `seconds` length at [`SYNTH_RATE`], fully determined by `seed`.
///
/// Notes of 0.12–0.35 s overlap in two layers; each has 2–4 partials in
/// 320–1900 Hz, a slow pitch glide and amplitude tremolo so the spectrum
/// never holds still.
pub fn synth_song(seed: u64, seconds: f64) -> PcmAudio {
    let rate = f64::from(SYNTH_RATE);
    let total = (seconds * rate).round() as usize;
    let mut rng = rng_for(seed, 1);
    let mut voices = Vec::new();
    for layer in 0..2 {
        let mut t = if layer == 0 { 0 } else { (rng.random_range(0.05..0.15) * rate) as usize };
        while t < total {
            let len = (rng.random_range(0.12..0.35) * rate) as usize;
            let partials = rng.random_range(2..=4);
            voices.push(Voice {
                start: t,
                len: len + (0.08 * rate) as usize,
                freqs: (0..partials).map(|_| rng.random_range(320.0..1900.0)).collect(),
                sweep: rng.random_range(-0.6..0.6),
                gain: rng.random_range(0.3..1.0),
                tremolo_hz: rng.random_range(3.0..9.0),
                tremolo_depth: rng.random_range(0.2..0.5),
            });
            t += len;
        }
    }

    let mut samples = vec![0.0f64; total];
    for v in &voices {
        let end = (v.start + v.len).min(total);
        let attack = 0.015 * rate;
        for (n, s) in samples[v.start..end].iter_mut().enumerate() {
            let t = n as f64 / rate;
            let env = (n as f64 / attack).min(1.0) * (-3.0 * t).exp() * (1.0 - (n as f64 / v.len as f64)).sqrt();
            let trem = 1.0 + v.tremolo_depth * (TAU * v.tremolo_hz * t).sin();
            let mut sum = 0.0;
            for (k, f) in v.freqs.iter().enumerate() {
                // Frequency glides linearly by `sweep` octaves per second.
                let phase = TAU * f * (t + v.sweep * std::f64::consts::LN_2 * t * t / 2.0);
                sum += (phase + k as f64).sin() / (k + 1) as f64;
            }
            *s += v.gain * env * trem * sum;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let scale = if peak > 0.0 { 0.8 / peak } else { 0.0 };
    PcmAudio::new(samples.into_iter().map(|s| (s * scale) as f32).collect(), SYNTH_RATE)
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> Vec<&'static str> {
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect()
}

fn capitalized(ws: &[&str]) -> String {
    ws.iter()
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c).collect::<String>())
                .unwrap_or_default()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Metadata and lyrics for synthetic song `id`. Lyrics repeat a chorus.
pub fn synth_record(seed: u64, id: u32) -> SongRecord {
    let mut rng = rng_for(seed ^ 0x5eed_0000, u64::from(id) + 1);
    let title_len = rng.random_range(1..=3);
    let title_words = words(&mut rng, title_len);
    let artist_words = words(&mut rng, 2);
    let album_words = words(&mut rng, 2);
    let chorus = words(&mut rng, 6).join(" ");
    let mut lyrics = Vec::new();
    for _ in 0..3 {
        lyrics.push(words(&mut rng, 8).join(" "));
        lyrics.push(chorus.clone());
    }
    let year = rng.random_range(1960..2024);
    let day = rng.random_range(0..365);
    let release_date = NaiveDate::from_ymd_opt(year, 1, 1).unwrap() + chrono::Days::new(day);
    SongRecord {
        id: SongId(id),
        title: capitalized(&title_words),
        artist: format!("The {}", capitalized(&artist_words)),
        album: rng.random_bool(0.8).then(|| capitalized(&album_words)),
        genre: Some(GENRES[rng.random_range(0..GENRES.len())].to_string()),
        release_date,
        lyrics: lyrics.join("\n"),
        audio: None,
    }
}

/// `count` synthetic songs with ids `0..count`.
pub fn synthetic_corpus(count: usize, seconds: f64, seed: u64) -> (Vec<SongRecord>, Vec<PcmAudio>) {
    let records = (0..count as u32).map(|i| synth_record(seed, i)).collect();
    let audio = (0..count as u64)
        .map(|i| synth_song(seed.wrapping_mul(1_000_003).wrapping_add(i), seconds))
        .collect();
    (records, audio)
}

/// Linear chirp at [`SYNTH_RATE`] sweeping `from_hz` to `to_hz`, amplitude 0.5.
pub fn chirp(from_hz: f64, to_hz: f64, seconds: f64) -> PcmAudio {
    let rate = f64::from(SYNTH_RATE);
    let n = (seconds * rate).round() as usize;
    let k = (to_hz - from_hz) / seconds;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            (0.5 * (TAU * (from_hz * t + 0.5 * k * t * t)).sin()) as f32
        })
        .collect();
    PcmAudio::new(samples, SYNTH_RATE)
}
