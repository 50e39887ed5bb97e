//! Reproducible experiments: white-noise robustness of audio search and
//! hyperparameter sweeps. Every report is a pure function of engine,
//! inputs and seed; latency is measured but only written when asked for.

pub mod noise;
pub mod synth;

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::PcmAudio;
use crate::engine::SearchEngine;
use crate::fingerprint::{FingerprintSequence, SubFingerprint};
use crate::fpindex::FpIndexConfig;
use crate::model::{FieldKind, SongId, SongRecord};
use crate::text::{tokenize, FieldProfile};

pub use noise::{add_white_noise, white_noise, NoiseError, NoiseSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub parameter: String,
    pub value: String,
    pub queries: usize,
    /// Queries whose search failed; counted as misses.
    pub errors: usize,
    pub hits_at_1: usize,
    pub hits_at_5: usize,
    pub recall_at_1: f64,
    pub recall_at_5: f64,
    pub mean_latency_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub experiment: String,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn to_csv(&self, with_latency: bool) -> String {
        let mut out = String::from("parameter,value,queries,errors,hits_at_1,hits_at_5,recall_at_1,recall_at_5");
        if with_latency {
            out.push_str(",mean_latency_ms");
        }
        out.push_str(",error\n");
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6}",
                r.parameter, r.value, r.queries, r.errors, r.hits_at_1, r.hits_at_5, r.recall_at_1, r.recall_at_5
            )
            .unwrap();
            if with_latency {
                write!(out, ",{:.3}", r.mean_latency_ms).unwrap();
            }
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, ",{err}").unwrap();
        }
        out
    }

    pub fn summary_json(&self, with_latency: bool) -> String {
        let mut report = self.clone();
        if !with_latency {
            for r in &mut report.rows {
                r.mean_latency_ms = 0.0;
            }
        }
        serde_json::to_string_pretty(&report).expect("report serializes")
    }

    /// Writes `<experiment>.csv` and `<experiment>.json` into `dir`.
    pub fn write(&self, dir: &Path, with_latency: bool) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{}.csv", self.experiment)), self.to_csv(with_latency))?;
        std::fs::write(dir.join(format!("{}.json", self.experiment)), self.summary_json(with_latency))
    }

    pub fn row(&self, value: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.value == value)
    }
}

#[derive(Debug, Default)]
struct Tally {
    queries: usize,
    errors: usize,
    hits_at_1: usize,
    hits_at_5: usize,
    latency_ms: f64,
}

impl Tally {
    fn add(&mut self, outcome: &QueryOutcome) {
        self.queries += 1;
        self.latency_ms += outcome.latency_ms;
        match outcome.rank {
            Err(()) => self.errors += 1,
            Ok(Some(r)) => {
                self.hits_at_1 += usize::from(r == 0);
                self.hits_at_5 += usize::from(r < 5);
            }
            Ok(None) => {}
        }
    }

    fn row(self, parameter: &str, value: String) -> ReportRow {
        let n = self.queries.max(1) as f64;
        ReportRow {
            parameter: parameter.to_string(),
            value,
            queries: self.queries,
            errors: self.errors,
            hits_at_1: self.hits_at_1,
            hits_at_5: self.hits_at_5,
            recall_at_1: self.hits_at_1 as f64 / n,
            recall_at_5: self.hits_at_5 as f64 / n,
            mean_latency_ms: self.latency_ms / n,
            error: None,
        }
    }
}

struct QueryOutcome {
    /// Position of the true song in the result list; `Err` if the search failed.
    rank: Result<Option<usize>, ()>,
    latency_ms: f64,
}

fn outcome(truth: SongId, started: Instant, hits: Result<Vec<SongId>, ()>) -> QueryOutcome {
    QueryOutcome {
        rank: hits.map(|h| h.iter().position(|&s| s == truth)),
        latency_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

/// Formats an SNR for report rows.
pub fn snr_label(snr_db: f64) -> String {
    if snr_db == f64::INFINITY {
        "inf".into()
    } else {
        format!("{snr_db}")
    }
}

/// One clip to cut from a song.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipTrial {
    pub song: SongId,
    pub start: usize,
    pub len: usize,
    pub seed: u64,
}

/// Random clips, `per_song` for every song. When a song is already at the
/// extractor's rate the start is a multiple of `hop`, so a clean clip's
/// fingerprint is an exact sub-sequence of the song's.
pub fn clip_trials(
    audio: &[(SongId, PcmAudio)],
    clip_seconds: f64,
    per_song: usize,
    target_rate: u32,
    hop: usize,
    seed: u64,
) -> Vec<ClipTrial> {
    let mut trials = Vec::new();
    for (song, pcm) in audio {
        let len = (clip_seconds * f64::from(pcm.sample_rate)).round() as usize;
        if pcm.len() < len || len == 0 {
            continue;
        }
        let step = if pcm.sample_rate == target_rate { hop } else { 1 };
        let positions = (pcm.len() - len) / step + 1;
        for t in 0..per_song {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(song.0) << 20 | t as u64);
            let start = rng.random_range(0..positions) * step;
            trials.push(ClipTrial {
                song: *song,
                start,
                len,
                seed: rng.random(),
            });
        }
    }
    trials
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseExperiment {
    pub snr_db: Vec<f64>,
    pub clip_seconds: f64,
    pub queries_per_song: usize,
    pub seed: u64,
}

impl Default for NoiseExperiment {
    fn default() -> Self {
        Self {
            snr_db: vec![f64::INFINITY, 30.0, 20.0, 10.0, 0.0],
            clip_seconds: 3.0,
            queries_per_song: 1,
            seed: 7,
        }
    }
}

const EVAL_LIMIT: usize = 5;

fn audio_query(engine: &SearchEngine, clip: &PcmAudio) -> Result<Vec<SongId>, ()> {
    engine
        .search_audio(clip, EVAL_LIMIT)
        .map(|h| h.into_iter().map(|(s, _)| s).collect())
        .map_err(|_| ())
}

/// Cuts random clips, adds white noise at each SNR and records whether
/// audio search puts the true song first / in the top five. Every SNR
/// level uses the same clips and the same noise shape, scaled.
pub fn noise_recall_experiment(
    engine: &SearchEngine,
    audio: &[(SongId, PcmAudio)],
    exp: &NoiseExperiment,
) -> EvalReport {
    let ex = engine.config().extractor.clone();
    let trials = clip_trials(audio, exp.clip_seconds, exp.queries_per_song, ex.target_rate, ex.hop, exp.seed);
    let by_song: std::collections::BTreeMap<SongId, &PcmAudio> = audio.iter().map(|(s, a)| (*s, a)).collect();

    let rows = exp
        .snr_db
        .iter()
        .map(|&snr| {
            let outcomes: Vec<QueryOutcome> = trials
                .par_iter()
                .map(|t| {
                    let clip = by_song[&t.song].slice(t.start, t.len);
                    let started = Instant::now();
                    let hits = add_white_noise(&clip, NoiseSpec { snr_db: snr, seed: t.seed })
                        .map_err(|_| ())
                        .and_then(|noisy| audio_query(engine, &noisy));
                    outcome(t.song, started, hits)
                })
                .collect();
            let mut tally = Tally::default();
            outcomes.iter().for_each(|o| tally.add(o));
            tally.row("snr_db", snr_label(snr))
        })
        .collect();
    EvalReport {
        experiment: "noise".into(),
        seed: exp.seed,
        rows,
    }
}

/// Fixed audio query set for sweeps over fingerprint parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSuite {
    pub clip_seconds: f64,
    pub queries_per_song: usize,
    pub snr_db: f64,
    /// Distinct random bits flipped in every query sub-fingerprint after extraction.
    pub bit_flips_per_word: u32,
    pub seed: u64,
}

impl Default for AudioSuite {
    fn default() -> Self {
        Self {
            clip_seconds: 3.0,
            queries_per_song: 1,
            snr_db: f64::INFINITY,
            bit_flips_per_word: 0,
            seed: 11,
        }
    }
}

/// Flips `flips` distinct random bits in every word.
pub fn corrupt_bits(seq: &FingerprintSequence, flips: u32, seed: u64) -> FingerprintSequence {
    if flips == 0 {
        return seq.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subfps = seq
        .subfps
        .iter()
        .map(|w| {
            let mask = sample(&mut rng, 32, flips.min(32) as usize)
                .into_iter()
                .fold(0u32, |m, b| m | 1 << b);
            SubFingerprint(w.0 ^ mask)
        })
        .collect();
    FingerprintSequence {
        song: seq.song,
        subfps,
    }
}

/// Query fingerprints for an audio suite, paired with their true song.
pub fn prepare_audio_suite(
    engine: &SearchEngine,
    audio: &[(SongId, PcmAudio)],
    suite: &AudioSuite,
) -> Vec<(SongId, Option<FingerprintSequence>)> {
    let ex = engine.config().extractor.clone();
    let trials = clip_trials(audio, suite.clip_seconds, suite.queries_per_song, ex.target_rate, ex.hop, suite.seed);
    let by_song: std::collections::BTreeMap<SongId, &PcmAudio> = audio.iter().map(|(s, a)| (*s, a)).collect();
    trials
        .par_iter()
        .map(|t| {
            let clip = by_song[&t.song].slice(t.start, t.len);
            let seq = add_white_noise(&clip, NoiseSpec { snr_db: suite.snr_db, seed: t.seed })
                .ok()
                .and_then(|noisy| engine.extract_query(&noisy).ok())
                .map(|seq| corrupt_bits(&seq, suite.bit_flips_per_word, t.seed ^ 0xb175));
            (t.song, seq)
        })
        .collect()
}

/// Fixed text query set: query text and the song it should find.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextQuerySuite {
    pub field: FieldKind,
    pub queries: Vec<(String, SongId)>,
}

impl TextQuerySuite {
    /// Random adjacent word pairs from each song's lyrics (after stop-word removal).
    pub fn bigrams_from_lyrics(records: &[SongRecord], per_song: usize, seed: u64) -> Self {
        let profile = FieldProfile::default_for(FieldKind::Lyrics);
        let mut queries = Vec::new();
        for r in records {
            let tokens = tokenize(&r.lyrics, &profile);
            if tokens.len() < 2 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(r.id.0));
            for _ in 0..per_song {
                let i = rng.random_range(0..tokens.len() - 1);
                queries.push((format!("{} {}", tokens[i], tokens[i + 1]), r.id));
            }
        }
        Self {
            field: FieldKind::Lyrics,
            queries,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NgramN,
    ToggleBits,
    CoarseMinMatches,
    BerThreshold,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NgramN => "ngram_N",
            SweepParam::ToggleBits => "toggle_bits",
            SweepParam::CoarseMinMatches => "coarse_min_matches",
            SweepParam::BerThreshold => "ber_threshold",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ngram_N" | "ngram_n" | "ngram" => Ok(SweepParam::NgramN),
            "toggle_bits" => Ok(SweepParam::ToggleBits),
            "coarse_min_matches" => Ok(SweepParam::CoarseMinMatches),
            "ber_threshold" => Ok(SweepParam::BerThreshold),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

/// The query set a sweep holds fixed while one parameter varies.
pub enum FixedExperiment<'a> {
    Audio {
        audio: &'a [(SongId, PcmAudio)],
        suite: AudioSuite,
    },
    Text(&'a TextQuerySuite),
}

fn whole(value: f64) -> Result<u32, String> {
    if value >= 0.0 && value.fract() == 0.0 && value <= f64::from(u32::MAX) {
        Ok(value as u32)
    } else {
        Err(format!("{value} is not a non-negative integer"))
    }
}

/// Engine variant with `param` set to `value`.
fn configured(engine: &SearchEngine, param: SweepParam, value: f64, text_field: FieldKind) -> Result<SearchEngine, String> {
    let fp = |f: &dyn Fn(&mut FpIndexConfig)| {
        let mut config = engine.config().fingerprint.clone();
        f(&mut config);
        engine.with_fingerprint_config(config).map_err(|e| e.to_string())
    };
    match param {
        SweepParam::NgramN => {
            let n = whole(value)?;
            if n == 0 {
                return Err("ngram_N must be at least 1".into());
            }
            let profile = engine
                .text_index(text_field)
                .ok_or("not a text field")?
                .profile()
                .with_ngram_max(n as usize);
            engine.with_text_profile(profile).map_err(|e| e.to_string())
        }
        SweepParam::ToggleBits => {
            let n = whole(value)?;
            fp(&|c| c.toggle_bits = n)
        }
        SweepParam::CoarseMinMatches => {
            let n = whole(value)?;
            fp(&|c| c.coarse_min_matches = Some(n))
        }
        SweepParam::BerThreshold => fp(&|c| c.ber_threshold = value),
    }
}

/// One report row per value of `param`, everything else held fixed.
/// Invalid values produce a row carrying the error.
pub fn sweep(engine: &SearchEngine, param: SweepParam, values: &[f64], fixed: &FixedExperiment<'_>) -> EvalReport {
    let text_field = match fixed {
        FixedExperiment::Text(s) => s.field,
        FixedExperiment::Audio { .. } => FieldKind::Lyrics,
    };
    let prepared = match fixed {
        FixedExperiment::Audio { audio, suite } => Some(prepare_audio_suite(engine, audio, suite)),
        FixedExperiment::Text(_) => None,
    };
    let (seed, kind) = match fixed {
        FixedExperiment::Audio { suite, .. } => (suite.seed, "audio"),
        FixedExperiment::Text(_) => (0, "text"),
    };

    let rows = values
        .iter()
        .map(|&value| {
            let label = format!("{value}");
            let mismatch = matches!(
                (param, fixed),
                (SweepParam::NgramN, FixedExperiment::Audio { .. })
                    | (SweepParam::ToggleBits | SweepParam::CoarseMinMatches | SweepParam::BerThreshold, FixedExperiment::Text(_))
            );
            let variant = if mismatch {
                Err(format!("{} cannot be swept on a {kind} experiment", param.name()))
            } else {
                configured(engine, param, value, text_field)
            };
            let variant = match variant {
                Ok(v) => v,
                Err(e) => {
                    let mut row = Tally::default().row(param.name(), label);
                    row.error = Some(e);
                    return row;
                }
            };
            let outcomes: Vec<QueryOutcome> = match (fixed, &prepared) {
                (FixedExperiment::Audio { .. }, Some(queries)) => queries
                    .par_iter()
                    .map(|(truth, seq)| {
                        let started = Instant::now();
                        let hits = seq
                            .as_ref()
                            .ok_or(())
                            .and_then(|seq| variant.fingerprint_index().search_audio(seq, EVAL_LIMIT).map_err(|_| ()))
                            .map(|h| h.into_iter().map(|(s, _)| s).collect());
                        outcome(*truth, started, hits)
                    })
                    .collect(),
                (FixedExperiment::Text(suite), _) => suite
                    .queries
                    .par_iter()
                    .map(|(q, truth)| {
                        let started = Instant::now();
                        let hits = variant
                            .search_text(suite.field, q, EVAL_LIMIT)
                            .map(|h| h.into_iter().map(|(s, _)| s).collect())
                            .map_err(|_| ());
                        outcome(*truth, started, hits)
                    })
                    .collect(),
                _ => unreachable!(),
            };
            let mut tally = Tally::default();
            outcomes.iter().for_each(|o| tally.add(o));
            tally.row(param.name(), label)
        })
        .collect();
    EvalReport {
        experiment: format!("sweep-{}", param.name()),
        seed,
        rows,
    }
}
