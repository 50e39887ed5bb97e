//! Inverted index over 32-bit sub-fingerprints with toggled-bit expansion,
//! and the two-phase (coarse lookup, fine Hamming comparison) audio search.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::fingerprint::{FingerprintSequence, SubFingerprint, BITS};
use crate::model::SongId;

/// Where toggled-bit variants are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// Variants are stored in the key map; a query does one lookup per word.
    #[default]
    IndexTime,
    /// Only original words are stored; each query word is expanded instead.
    QueryTime,
}

/// How fine search picks the alignment of a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Every shift with enough overlap is scored; the lowest BER wins, ties
    /// go to the more frequent coarse shift, then the smaller shift.
    #[default]
    BestShift,
    /// Only the most frequent coarse shift (ties to the smallest) is scored.
    DominantShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpIndexConfig {
    /// Maximum number of flipped bits a stored word tolerates.
    pub toggle_bits: u32,
    /// Minimum matching query positions for a song to reach fine search.
    /// `None` means `max(3, ceil(0.02 * query_len))`.
    pub coarse_min_matches: Option<u32>,
    /// Largest accepted bit error rate.
    pub ber_threshold: f64,
    /// Minimum aligned overlap, as a fraction of the query length.
    pub min_overlap_fraction: f64,
    pub expansion: ExpansionMode,
    #[serde(default)]
    pub alignment: Alignment,
}

impl Default for FpIndexConfig {
    fn default() -> Self {
        Self {
            toggle_bits: 1,
            coarse_min_matches: None,
            ber_threshold: 0.35,
            min_overlap_fraction: 0.8,
            expansion: ExpansionMode::IndexTime,
            alignment: Alignment::BestShift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FpConfigError {
    #[error("toggle_bits must be at most 32, got {0}")]
    ToggleBits(u32),
    #[error("coarse_min_matches must be positive")]
    MinMatches,
    #[error("ber_threshold must lie in [0, 1), got {0}")]
    BerThreshold(f64),
    #[error("min_overlap_fraction must lie in (0, 1], got {0}")]
    Overlap(f64),
}

impl FpIndexConfig {
    pub fn validate(&self) -> Result<(), FpConfigError> {
        if self.toggle_bits > BITS {
            return Err(FpConfigError::ToggleBits(self.toggle_bits));
        }
        if self.coarse_min_matches == Some(0) {
            return Err(FpConfigError::MinMatches);
        }
        if !(0.0..1.0).contains(&self.ber_threshold) {
            return Err(FpConfigError::BerThreshold(self.ber_threshold));
        }
        if !(self.min_overlap_fraction > 0.0 && self.min_overlap_fraction <= 1.0) {
            return Err(FpConfigError::Overlap(self.min_overlap_fraction));
        }
        Ok(())
    }

    pub fn min_matches(&self, query_len: usize) -> usize {
        match self.coarse_min_matches {
            Some(n) => n as usize,
            None => 3.max((query_len * 2).div_ceil(100)),
        }
    }

    /// Keys stored per distinct sub-fingerprint: `1 + sum_{i=1..n} C(32, i)`.
    pub fn keys_per_subfp(&self) -> u64 {
        keys_per_word(self.toggle_bits)
    }

    fn index_bits(&self) -> u32 {
        match self.expansion {
            ExpansionMode::IndexTime => self.toggle_bits,
            ExpansionMode::QueryTime => 0,
        }
    }

    fn query_bits(&self) -> u32 {
        match self.expansion {
            ExpansionMode::IndexTime => 0,
            ExpansionMode::QueryTime => self.toggle_bits,
        }
    }
}

/// `1 + sum_{i=1..n} C(32, i)`.
pub fn keys_per_word(n: u32) -> u64 {
    let mut total = 1u64;
    let mut c = 1u64;
    for i in 1..=u64::from(n.min(BITS)) {
        c = c * (u64::from(BITS) + 1 - i) / i;
        total += c;
    }
    total
}

/// `word` together with every variant that has between 1 and `n` bits flipped.
/// Returned sorted ascending.
pub fn expand_keys(word: SubFingerprint, n: u32) -> Vec<u32> {
    assert!(n <= BITS, "at most 32 bits can be toggled");
    let mut keys = Vec::with_capacity(keys_per_word(n) as usize);
    keys.push(word.0);
    for k in 1..=n {
        // Gosper's hack: visit every 32-bit mask with exactly k bits set.
        let mut mask: u64 = (1u64 << k) - 1;
        while mask < 1u64 << BITS {
            keys.push(word.0 ^ mask as u32);
            let c = mask & mask.wrapping_neg();
            let r = mask + c;
            mask = (((r ^ mask) >> 2) / c) | r;
        }
    }
    keys.sort_unstable();
    keys
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FpPosting {
    pub song: SongId,
    pub offset: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FpIndexError {
    #[error("song {0} is already in the fingerprint index")]
    DuplicateSong(SongId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AudioSearchError {
    #[error("query fingerprint is empty (audio too short)")]
    EmptyQuery,
}

/// Song surviving coarse search, with its alignment evidence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub song: SongId,
    /// Query positions whose lookup hit this song at least once.
    pub match_count: usize,
    /// Histogram of `posting.offset - query_position`.
    pub shifts: BTreeMap<i64, u32>,
}

impl Candidate {
    /// Most frequent shift; ties go to the smallest.
    pub fn best_shift(&self) -> Option<i64> {
        let mut best: Option<(i64, u32)> = None;
        for (&shift, &count) in &self.shifts {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((shift, count));
            }
        }
        best.map(|(s, _)| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FineOutcome {
    Accepted { similarity: f64, ber: f64, shift: i64 },
    BelowThreshold { ber: f64, shift: i64 },
    InsufficientOverlap { overlap: usize, shift: i64 },
}

impl FineOutcome {
    pub fn similarity(&self) -> Option<f64> {
        match *self {
            FineOutcome::Accepted { similarity, .. } => Some(similarity),
            _ => None,
        }
    }
}

/// Overlap length and total Hamming distance when `query[i]` is aligned
/// with `stored[i + shift]`.
pub fn aligned_distance(stored: &[SubFingerprint], query: &[SubFingerprint], shift: i64) -> (usize, u64) {
    let q_start = (-shift).max(0);
    let q_end = (query.len() as i64).min(stored.len() as i64 - shift);
    if q_end <= q_start {
        return (0, 0);
    }
    let distance = (q_start..q_end)
        .map(|i| u64::from(query[i as usize].hamming(stored[(i + shift) as usize])))
        .sum();
    ((q_end - q_start) as usize, distance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioHit {
    pub song: SongId,
    pub similarity: f64,
    pub ber: f64,
    pub shift: i64,
}

/// The persisted part of an [`FpIndex`]. The expanded key map is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpIndexData {
    pub config: FpIndexConfig,
    pub posting_lists: BTreeMap<u32, Vec<FpPosting>>,
    pub fingerprint_store: BTreeMap<SongId, Vec<SubFingerprint>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpIndex {
    config: FpIndexConfig,
    /// Key to the original words whose posting lists it resolves to.
    key_map: BTreeMap<u32, SmallVec<[u32; 2]>>,
    posting_lists: BTreeMap<u32, Vec<FpPosting>>,
    fingerprint_store: BTreeMap<SongId, Vec<SubFingerprint>>,
}

impl FpIndex {
    pub fn new(config: FpIndexConfig) -> Result<Self, FpConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            key_map: BTreeMap::new(),
            posting_lists: BTreeMap::new(),
            fingerprint_store: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &FpIndexConfig {
        &self.config
    }

    pub fn key_count(&self) -> usize {
        self.key_map.len()
    }

    pub fn song_count(&self) -> usize {
        self.fingerprint_store.len()
    }

    pub fn fingerprint(&self, song: SongId) -> Option<&[SubFingerprint]> {
        self.fingerprint_store.get(&song).map(Vec::as_slice)
    }

    pub fn songs(&self) -> impl Iterator<Item = SongId> + '_ {
        self.fingerprint_store.keys().copied()
    }

    /// Canonical posting list of an original stored word.
    pub fn posting_list(&self, word: SubFingerprint) -> Option<&[FpPosting]> {
        self.posting_lists.get(&word.0).map(Vec::as_slice)
    }

    /// Original words whose posting lists `key` points to.
    pub fn resolve(&self, key: u32) -> &[u32] {
        self.key_map.get(&key).map_or(&[], |v| v.as_slice())
    }

    pub fn insert_song(&mut self, song: SongId, seq: &FingerprintSequence) -> Result<(), FpIndexError> {
        if self.fingerprint_store.contains_key(&song) {
            return Err(FpIndexError::DuplicateSong(song));
        }
        let bits = self.config.index_bits();
        for (offset, &word) in seq.subfps.iter().enumerate() {
            let posting = FpPosting {
                song,
                offset: offset as u32,
            };
            let list = self.posting_lists.entry(word.0).or_default();
            let fresh = list.is_empty();
            let pos = list.partition_point(|p| *p < posting);
            list.insert(pos, posting);
            if fresh {
                Self::register_keys(&mut self.key_map, word, bits);
            }
        }
        self.fingerprint_store.insert(song, seq.subfps.clone());
        Ok(())
    }

    fn register_keys(key_map: &mut BTreeMap<u32, SmallVec<[u32; 2]>>, word: SubFingerprint, bits: u32) {
        for key in expand_keys(word, bits) {
            let targets = key_map.entry(key).or_default();
            if let Err(pos) = targets.binary_search(&word.0) {
                targets.insert(pos, word.0);
            }
        }
    }

    pub fn to_data(&self) -> FpIndexData {
        FpIndexData {
            config: self.config.clone(),
            posting_lists: self.posting_lists.clone(),
            fingerprint_store: self.fingerprint_store.clone(),
        }
    }

    /// Rebuilds the key map from the canonical lists.
    pub fn from_data(data: FpIndexData) -> Result<Self, FpConfigError> {
        let mut index = FpIndex::new(data.config)?;
        let bits = index.config.index_bits();
        for &word in data.posting_lists.keys() {
            Self::register_keys(&mut index.key_map, SubFingerprint(word), bits);
        }
        index.posting_lists = data.posting_lists;
        index.fingerprint_store = data.fingerprint_store;
        Ok(index)
    }

    /// Same stored songs under a different search configuration, rebuilding
    /// the key map when the expansion changes.
    pub fn reconfigured(&self, config: FpIndexConfig) -> Result<Self, FpConfigError> {
        let mut data = self.to_data();
        data.config = config;
        FpIndex::from_data(data)
    }

    fn lookup(&self, word: SubFingerprint, mut visit: impl FnMut(&FpPosting)) {
        let qbits = self.config.query_bits();
        let keys: SmallVec<[u32; 1]> = if qbits == 0 {
            smallvec::smallvec![word.0]
        } else {
            expand_keys(word, qbits).into()
        };
        for key in keys {
            for canonical in self.resolve(key) {
                for p in &self.posting_lists[canonical] {
                    visit(p);
                }
            }
        }
    }

    /// Songs with at least `min_matches` query positions found in the index,
    /// sorted by `SongId`.
    pub fn coarse_search(&self, query: &FingerprintSequence) -> Vec<Candidate> {
        let mut by_song: BTreeMap<SongId, (usize, Option<usize>, BTreeMap<i64, u32>)> =
            BTreeMap::new();
        for (i, &word) in query.subfps.iter().enumerate() {
            self.lookup(word, |p| {
                let entry = by_song.entry(p.song).or_default();
                if entry.1 != Some(i) {
                    entry.0 += 1;
                    entry.1 = Some(i);
                }
                *entry.2.entry(i64::from(p.offset) - i as i64).or_insert(0) += 1;
            });
        }
        let min = self.config.min_matches(query.len());
        by_song
            .into_iter()
            .filter(|(_, (count, _, _))| *count >= min)
            .map(|(song, (match_count, _, shifts))| Candidate {
                song,
                match_count,
                shifts,
            })
            .collect()
    }

    /// Aligns the query against the candidate's stored fingerprint and
    /// scores it by bit error rate.
    pub fn fine_search(&self, candidate: &Candidate, query: &FingerprintSequence) -> FineOutcome {
        let stored = self.fingerprint(candidate.song).unwrap_or(&[]);
        let needed = self.config.min_overlap_fraction * query.len() as f64;
        let admissible = |overlap: usize| overlap > 0 && overlap as f64 >= needed;
        let dominant = candidate.best_shift().unwrap_or(0);

        let (shift, overlap, distance) = match self.config.alignment {
            Alignment::DominantShift => {
                let (overlap, distance) = aligned_distance(stored, &query.subfps, dominant);
                (dominant, overlap, distance)
            }
            Alignment::BestShift => {
                let votes = |s: i64| candidate.shifts.get(&s).copied().unwrap_or(0);
                let mut best: Option<(i64, usize, u64)> = None;
                for shift in 1 - query.len() as i64..stored.len() as i64 {
                    let (overlap, distance) = aligned_distance(stored, &query.subfps, shift);
                    if !admissible(overlap) {
                        continue;
                    }
                    // distance/overlap < best_d/best_o, compared exactly.
                    let better = best.is_none_or(|(s, o, d)| {
                        let lhs = u128::from(distance) * o as u128;
                        let rhs = u128::from(d) * overlap as u128;
                        lhs < rhs || (lhs == rhs && votes(shift) > votes(s))
                    });
                    if better {
                        best = Some((shift, overlap, distance));
                    }
                }
                match best {
                    Some(b) => b,
                    None => {
                        let (overlap, _) = aligned_distance(stored, &query.subfps, dominant);
                        return FineOutcome::InsufficientOverlap { overlap, shift: dominant };
                    }
                }
            }
        };
        if !admissible(overlap) {
            return FineOutcome::InsufficientOverlap { overlap, shift };
        }
        let ber = distance as f64 / (f64::from(BITS) * overlap as f64);
        if ber <= self.config.ber_threshold {
            FineOutcome::Accepted {
                similarity: 1.0 - ber,
                ber,
                shift,
            }
        } else {
            FineOutcome::BelowThreshold { ber, shift }
        }
    }

    /// Coarse then fine search; accepted songs by similarity descending,
    /// ties by `SongId`.
    pub fn search_detailed(
        &self,
        query: &FingerprintSequence,
        limit: usize,
    ) -> Result<Vec<AudioHit>, AudioSearchError> {
        if query.is_empty() {
            return Err(AudioSearchError::EmptyQuery);
        }
        let candidates = self.coarse_search(query);
        let mut hits: Vec<AudioHit> = candidates
            .par_iter()
            .filter_map(|c| match self.fine_search(c, query) {
                FineOutcome::Accepted {
                    similarity,
                    ber,
                    shift,
                } => Some(AudioHit {
                    song: c.song,
                    similarity,
                    ber,
                    shift,
                }),
                _ => None,
            })
            .collect();
        hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.song.cmp(&b.song)));
        hits.truncate(limit);
        Ok(hits)
    }

    pub fn search_audio(
        &self,
        query: &FingerprintSequence,
        limit: usize,
    ) -> Result<Vec<(SongId, f64)>, AudioSearchError> {
        Ok(self
            .search_detailed(query, limit)?
            .into_iter()
            .map(|h| (h.song, h.similarity))
            .collect())
    }
}
