//! Fixtures and brute-force reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use songseek_core::eval::synth::synthetic_corpus;
use songseek_core::fingerprint::SubFingerprint;
use songseek_core::{EngineConfig, PcmAudio, SearchEngine, SongId, SongRecord};

pub struct Fixture {
    pub engine: SearchEngine,
    pub records: Vec<SongRecord>,
    pub audio: Vec<(SongId, PcmAudio)>,
}

/// Synthetic corpus of `count` songs indexed with the default config.
pub fn synthetic_engine(count: usize, seconds: f64, seed: u64) -> Fixture {
    synthetic_engine_with(EngineConfig::default(), count, seconds, seed)
}

pub fn synthetic_engine_with(config: EngineConfig, count: usize, seconds: f64, seed: u64) -> Fixture {
    let (records, audio) = synthetic_corpus(count, seconds, seed);
    let opt: Vec<Option<PcmAudio>> = audio.iter().cloned().map(Some).collect();
    let engine = SearchEngine::build(config, records.clone(), &opt).expect("synthetic corpus builds");
    let audio = audio
        .into_iter()
        .enumerate()
        .map(|(i, a)| (SongId(i as u32), a))
        .collect();
    Fixture { engine, records, audio }
}

/// Songs with at least `min_matches` query positions whose word lies within
/// `n` bits of some stored word, found by comparing every pair of words.
pub fn brute_force_candidates(
    store: &BTreeMap<SongId, Vec<SubFingerprint>>,
    query: &[SubFingerprint],
    n: u32,
    min_matches: usize,
) -> BTreeSet<SongId> {
    store
        .iter()
        .filter(|(_, words)| {
            query
                .iter()
                .filter(|q| words.iter().any(|w| (q.0 ^ w.0).count_ones() <= n))
                .count()
                >= min_matches
        })
        .map(|(s, _)| *s)
        .collect()
}

/// Lowest bit error rate over every shift of `query` against `stored` whose
/// overlap is at least `min_overlap` words. Ties keep the smallest shift.
pub fn best_ber_any_shift(stored: &[SubFingerprint], query: &[SubFingerprint], min_overlap: f64) -> Option<(f64, i64)> {
    let mut best: Option<(f64, i64)> = None;
    let lo = -(query.len() as i64) + 1;
    let hi = stored.len() as i64 - 1;
    for shift in lo..=hi {
        let mut overlap = 0usize;
        let mut bits = 0u64;
        for (i, q) in query.iter().enumerate() {
            let j = i as i64 + shift;
            if j >= 0 && (j as usize) < stored.len() {
                overlap += 1;
                bits += u64::from((q.0 ^ stored[j as usize].0).count_ones());
            }
        }
        if overlap == 0 || (overlap as f64) < min_overlap * query.len() as f64 {
            continue;
        }
        let ber = bits as f64 / (32.0 * overlap as f64);
        if best.is_none_or(|(b, _)| ber < b) {
            best = Some((ber, shift));
        }
    }
    best
}

/// Exhaustive audio search: every candidate aligned at every shift, keeping
/// those whose best BER passes the threshold. Sorted like `search_audio`.
pub fn brute_force_search(
    store: &BTreeMap<SongId, Vec<SubFingerprint>>,
    candidates: &BTreeSet<SongId>,
    query: &[SubFingerprint],
    min_overlap: f64,
    ber_threshold: f64,
) -> Vec<(SongId, f64)> {
    let mut hits: Vec<(SongId, f64)> = candidates
        .iter()
        .filter_map(|s| {
            let (ber, _) = best_ber_any_shift(&store[s], query, min_overlap)?;
            (ber <= ber_threshold).then_some((*s, 1.0 - ber))
        })
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits
}

/// Stored fingerprints of every song in the engine.
pub fn fingerprint_store(engine: &SearchEngine) -> BTreeMap<SongId, Vec<SubFingerprint>> {
    let idx = engine.fingerprint_index();
    idx.songs()
        .map(|s| (s, idx.fingerprint(s).unwrap().to_vec()))
        .collect()
}
