//! Multi-field music search.
//!
//! A query may carry lyrics, metadata fields (title, artist, album, genre),
//! release-date bounds and an audio excerpt. Each field is searched on its
//! own index, the per-field scores are normalized and combined with a
//! weighted sum, date bounds filter the merged list, and the survivors are
//! sorted by final score.
//!
//! - [`text`]: tokenization, N-gram inverted index and tf-idf for text fields.
//! - [`fingerprint`]: 32-bit spectral sub-fingerprints from PCM audio.
//! - [`fpindex`]: toggled-bit inverted index with coarse/fine Hamming search.
//! - [`merge`]: normalization, weighted merge, date filter, ranking.
//! - [`engine`]: the end-to-end pipeline.
//! - [`snapshot`]: persisted indexes.
//! - [`eval`]: noise robustness and parameter sweeps.

pub mod audio;
pub mod corpus;
pub mod engine;
pub mod eval;
pub mod fingerprint;
pub mod fpindex;
pub mod merge;
pub mod model;
pub mod snapshot;
pub mod text;

pub use audio::{decode_wav, resample, PcmAudio, WavError};
pub use engine::{
    EngineConfig, ExecutionMode, ResultRow, SearchEngine, SearchError, SearchOptions,
    SearchResponse,
};
pub use fingerprint::{FingerprintExtractor, FingerprintSequence, SpectralExtractor, SubFingerprint};
pub use fpindex::{FpIndex, FpIndexConfig};
pub use model::{FieldKind, Query, SongId, SongRecord};
