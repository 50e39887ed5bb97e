//! The search pipeline: per-field searches, merge, filter, rank.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audio::PcmAudio;
use crate::corpus::{load_audio, CorpusError};
use crate::fingerprint::{
    ConfigError, ExtractError, ExtractorConfig, FingerprintExtractor, FingerprintSequence,
    SpectralExtractor,
};
use crate::fpindex::{AudioSearchError, FpConfigError, FpIndex, FpIndexConfig};
use crate::merge::{
    apply_filters, merge, normalize, rank, weights_with_overrides, FieldResult, MergeError,
    MergeWeights,
};
use crate::model::{validate_query, FieldKind, Invalid, Query, SongId, SongRecord};
use crate::text::{stopwords::STOPWORDS_VERSION, FieldProfile, TextIndex, TextSearchError};

pub const DEFAULT_LIMIT: usize = 20;

/// Every parameter that shapes an index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub text: BTreeMap<FieldKind, FieldProfile>,
    pub extractor: ExtractorConfig,
    pub fingerprint: FpIndexConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            text: FieldKind::TEXTUAL
                .into_iter()
                .map(|k| (k, FieldProfile::default_for(k)))
                .collect(),
            extractor: ExtractorConfig::default(),
            fingerprint: FpIndexConfig::default(),
        }
    }
}

impl EngineConfig {
    /// SHA-256 over the canonical JSON of the configuration and the
    /// stop-word list version.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Material<'a> {
            stopwords_version: u32,
            config: &'a EngineConfig,
        }
        let json = serde_json::to_vec(&Material {
            stopwords_version: STOPWORDS_VERSION,
            config: self,
        })
        .expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn with_ngram_max(mut self, field: FieldKind, n: usize) -> Self {
        if let Some(p) = self.text.get_mut(&field) {
            *p = p.with_ngram_max(n);
        }
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Extractor(#[from] ConfigError),
    #[error(transparent)]
    Fingerprint(#[from] FpConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("missing text profile for {0}")]
    MissingProfile(FieldKind),
    #[error("record at position {position} has id {id}; ids must be 0..K in order")]
    NonDenseIds { position: usize, id: SongId },
    #[error("{0}")]
    Index(String),
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid query: {0}")]
    InvalidQuery(#[from] Invalid),
    #[error("{field} search failed: {message}")]
    Field { field: FieldKind, message: String },
    #[error("no field has searchable terms after tokenization")]
    NothingToSearch,
    #[error("index for {0} is missing")]
    IndexMissing(FieldKind),
    #[error(transparent)]
    Merge(#[from] MergeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub limit: usize,
    pub mode: ExecutionMode,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            limit: DEFAULT_LIMIT,
            mode: ExecutionMode::Parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongSummary {
    pub id: SongId,
    pub title: String,
    pub artist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub album: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
    pub release_date: NaiveDate,
}

impl From<&SongRecord> for SongSummary {
    fn from(r: &SongRecord) -> Self {
        Self {
            id: r.id,
            title: r.title.clone(),
            artist: r.artist.clone(),
            album: r.album.clone(),
            genre: r.genre.clone(),
            release_date: r.release_date,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub song: SongSummary,
    pub final_score: f64,
    pub breakdown: BTreeMap<FieldKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub fields_ms: BTreeMap<FieldKind, f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<ResultRow>,
    pub timing: Timing,
    pub applied_weights: MergeWeights,
    /// Fields the user filled in that had no terms left after tokenization.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_fields: Vec<FieldKind>,
}

enum FieldOutcome {
    Hits(FieldResult),
    Skipped,
}

/// Immutable search state: corpus records plus every per-field index.
#[derive(Debug, Clone)]
pub struct SearchEngine {
    config: EngineConfig,
    records: Vec<SongRecord>,
    text: BTreeMap<FieldKind, TextIndex>,
    fingerprints: FpIndex,
    extractor: SpectralExtractor,
}

impl PartialEq for SearchEngine {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.records == other.records
            && self.text == other.text
            && self.fingerprints == other.fingerprints
    }
}

impl SearchEngine {
    /// Builds every index. `audio[i]`, when present, is the audio of `records[i]`.
    pub fn build(
        config: EngineConfig,
        records: Vec<SongRecord>,
        audio: &[Option<PcmAudio>],
    ) -> Result<Self, BuildError> {
        let extractor = SpectralExtractor::new(config.extractor.clone())?;
        let sequences: Vec<Option<FingerprintSequence>> = audio
            .par_iter()
            .map(|a| {
                a.as_ref().map(|pcm| extractor.extract(pcm).unwrap_or_default())
            })
            .collect();
        Self::from_fingerprints(config, records, sequences)
    }

    /// Builds from a corpus whose records reference WAV files on disk.
    pub fn build_from_records(config: EngineConfig, records: Vec<SongRecord>) -> Result<Self, BuildError> {
        let audio = records
            .par_iter()
            .map(load_audio)
            .collect::<Result<Vec<_>, _>>()?;
        Self::build(config, records, &audio)
    }

    /// Builds with precomputed fingerprint sequences (`None` = no audio).
    pub fn from_fingerprints(
        config: EngineConfig,
        records: Vec<SongRecord>,
        sequences: Vec<Option<FingerprintSequence>>,
    ) -> Result<Self, BuildError> {
        let extractor = SpectralExtractor::new(config.extractor.clone())?;
        for (position, r) in records.iter().enumerate() {
            if r.id.index() != position {
                return Err(BuildError::NonDenseIds { position, id: r.id });
            }
        }
        let mut text = BTreeMap::new();
        for field in FieldKind::TEXTUAL {
            let profile = *config
                .text
                .get(&field)
                .ok_or(BuildError::MissingProfile(field))?;
            let mut index = TextIndex::new(profile);
            for r in &records {
                index
                    .index_document(r.id, r.field_text(field).unwrap_or(""))
                    .map_err(|e| BuildError::Index(e.to_string()))?;
            }
            text.insert(field, index);
        }
        let mut fingerprints = FpIndex::new(config.fingerprint.clone())?;
        for (i, seq) in sequences.into_iter().enumerate() {
            if let Some(seq) = seq {
                fingerprints
                    .insert_song(SongId(i as u32), &seq)
                    .map_err(|e| BuildError::Index(e.to_string()))?;
            }
        }
        Ok(Self {
            config,
            records,
            text,
            fingerprints,
            extractor,
        })
    }

    /// Reassembles an engine from already-built parts.
    pub fn from_parts(
        config: EngineConfig,
        records: Vec<SongRecord>,
        text: BTreeMap<FieldKind, TextIndex>,
        fingerprints: FpIndex,
    ) -> Result<Self, BuildError> {
        let extractor = SpectralExtractor::new(config.extractor.clone())?;
        Ok(Self {
            config,
            records,
            text,
            fingerprints,
            extractor,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn records(&self) -> &[SongRecord] {
        &self.records
    }

    pub fn record(&self, id: SongId) -> Option<&SongRecord> {
        self.records.get(id.index())
    }

    pub fn text_index(&self, field: FieldKind) -> Option<&TextIndex> {
        self.text.get(&field)
    }

    pub fn text_indexes(&self) -> &BTreeMap<FieldKind, TextIndex> {
        &self.text
    }

    pub fn fingerprint_index(&self) -> &FpIndex {
        &self.fingerprints
    }

    pub fn extractor(&self) -> &SpectralExtractor {
        &self.extractor
    }

    /// Same records and fingerprints, with a different audio search configuration.
    pub fn with_fingerprint_config(&self, fp: FpIndexConfig) -> Result<Self, BuildError> {
        let fingerprints = self.fingerprints.reconfigured(fp.clone())?;
        let mut config = self.config.clone();
        config.fingerprint = fp;
        Ok(Self {
            config,
            fingerprints,
            ..self.clone()
        })
    }

    /// Rebuilds one text field's index under a different profile.
    pub fn with_text_profile(&self, profile: FieldProfile) -> Result<Self, BuildError> {
        let mut index = TextIndex::new(profile);
        for r in &self.records {
            index
                .index_document(r.id, r.field_text(profile.field).unwrap_or(""))
                .map_err(|e| BuildError::Index(e.to_string()))?;
        }
        let mut engine = self.clone();
        engine.config.text.insert(profile.field, profile);
        engine.text.insert(profile.field, index);
        Ok(engine)
    }

    pub fn extract_query(&self, audio: &PcmAudio) -> Result<FingerprintSequence, ExtractError> {
        self.extractor.extract(audio)
    }

    /// Raw (unnormalized) hits of one text field.
    pub fn search_text(
        &self,
        field: FieldKind,
        text: &str,
        limit: usize,
    ) -> Result<Vec<(SongId, f64)>, SearchError> {
        let index = self.text.get(&field).ok_or(SearchError::IndexMissing(field))?;
        index.search(text, limit).map_err(|e| match e {
            TextSearchError::EmptyQuery => SearchError::NothingToSearch,
        })
    }

    pub fn search_audio(&self, audio: &PcmAudio, limit: usize) -> Result<Vec<(SongId, f64)>, SearchError> {
        let field_err = |message: String| SearchError::Field {
            field: FieldKind::Audio,
            message,
        };
        let seq = self.extractor.extract(audio).map_err(|e| field_err(e.to_string()))?;
        self.fingerprints
            .search_audio(&seq, limit)
            .map_err(|e: AudioSearchError| field_err(e.to_string()))
    }

    fn run_field(&self, query: &Query, field: FieldKind) -> Result<FieldOutcome, SearchError> {
        match field {
            FieldKind::Audio => {
                let audio = query.audio.as_ref().ok_or(SearchError::IndexMissing(field))?;
                let hits = self.search_audio(audio, usize::MAX)?;
                Ok(FieldOutcome::Hits(FieldResult::new(field, hits)))
            }
            _ => {
                let text = query.text(field).unwrap_or("");
                match self.search_text(field, text, usize::MAX) {
                    Ok(hits) => Ok(FieldOutcome::Hits(FieldResult::new(field, hits))),
                    Err(SearchError::NothingToSearch) => Ok(FieldOutcome::Skipped),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Runs every present field independently, then normalizes, merges,
    /// filters by date and ranks. The result does not depend on `mode`.
    pub fn execute(&self, query: &Query, options: SearchOptions) -> Result<SearchResponse, SearchError> {
        validate_query(query)?;
        let started = Instant::now();
        let fields = query.present_fields();

        let timed = |field: FieldKind| {
            let t = Instant::now();
            let outcome = self.run_field(query, field);
            (field, outcome, t.elapsed().as_secs_f64() * 1e3)
        };
        let outcomes: Vec<_> = match options.mode {
            ExecutionMode::Parallel => fields.par_iter().map(|&f| timed(f)).collect(),
            ExecutionMode::Sequential => fields.iter().map(|&f| timed(f)).collect(),
        };

        let mut timing = Timing::default();
        let mut results = Vec::new();
        let mut skipped_fields = Vec::new();
        for (field, outcome, ms) in outcomes {
            timing.fields_ms.insert(field, ms);
            match outcome? {
                FieldOutcome::Hits(r) => results.push(normalize(&r)),
                FieldOutcome::Skipped => skipped_fields.push(field),
            }
        }
        if results.is_empty() {
            return Err(SearchError::NothingToSearch);
        }

        let present: BTreeSet<FieldKind> = results.iter().map(|r| r.field).collect();
        let weights = weights_with_overrides(&present, &query.weight_overrides)?;
        let merged = merge(&results, &weights)?;
        let filtered = apply_filters(merged, query, &self.records);
        let ranked = rank(filtered, options.limit);

        let rows = ranked
            .into_iter()
            .map(|r| ResultRow {
                song: SongSummary::from(&self.records[r.song.index()]),
                final_score: r.final_score,
                breakdown: r.breakdown,
            })
            .collect();
        timing.total_ms = started.elapsed().as_secs_f64() * 1e3;
        Ok(SearchResponse {
            results: rows,
            timing,
            applied_weights: weights,
            skipped_fields,
        })
    }
}
