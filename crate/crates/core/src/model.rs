//! Domain types shared by every stage of the search pipeline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::audio::PcmAudio;

/// Dense song identifier, assigned from 0 in ingestion order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct SongId(pub u32);

impl SongId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SongId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The searchable fields of a query. Declaration order is the canonical
/// order used whenever per-field values are combined.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Lyrics,
    Title,
    Artist,
    Album,
    Genre,
    Audio,
}

impl FieldKind {
    pub const ALL: [FieldKind; 6] = [
        FieldKind::Lyrics,
        FieldKind::Title,
        FieldKind::Artist,
        FieldKind::Album,
        FieldKind::Genre,
        FieldKind::Audio,
    ];

    pub const TEXTUAL: [FieldKind; 5] = [
        FieldKind::Lyrics,
        FieldKind::Title,
        FieldKind::Artist,
        FieldKind::Album,
        FieldKind::Genre,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Lyrics => "lyrics",
            FieldKind::Title => "title",
            FieldKind::Artist => "artist",
            FieldKind::Album => "album",
            FieldKind::Genre => "genre",
            FieldKind::Audio => "audio",
        }
    }

    pub fn is_textual(self) -> bool {
        self != FieldKind::Audio
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown field `{0}`")]
pub struct UnknownField(pub String);

impl FromStr for FieldKind {
    type Err = UnknownField;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownField(s.to_string()))
    }
}

/// Parses `YYYY-MM-DD`, or a bare `YYYY` which maps to January 1 of that year.
pub fn parse_date(s: &str) -> Result<NaiveDate, DateError> {
    let s = s.trim();
    if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
        let year: i32 = s.parse().map_err(|_| DateError(s.to_string()))?;
        return NaiveDate::from_ymd_opt(year, 1, 1).ok_or_else(|| DateError(s.to_string()));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| DateError(s.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid calendar date `{0}`")]
pub struct DateError(pub String);

/// Calendar date as it arrives from outside, before it is checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawDate {
    Valid(NaiveDate),
    Invalid(String),
}

impl RawDate {
    pub fn parse(s: &str) -> Self {
        match parse_date(s) {
            Ok(d) => RawDate::Valid(d),
            Err(_) => RawDate::Invalid(s.to_string()),
        }
    }
}

/// One song as ingested from the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongRecord {
    pub id: SongId,
    pub title: String,
    pub artist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub album: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
    pub release_date: NaiveDate,
    pub lyrics: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
}

impl SongRecord {
    /// Text of a textual field, or `None` for audio and absent optional fields.
    pub fn field_text(&self, field: FieldKind) -> Option<&str> {
        match field {
            FieldKind::Lyrics => Some(&self.lyrics),
            FieldKind::Title => Some(&self.title),
            FieldKind::Artist => Some(&self.artist),
            FieldKind::Album => self.album.as_deref(),
            FieldKind::Genre => self.genre.as_deref(),
            FieldKind::Audio => None,
        }
    }
}

/// A record whose fields have not been validated yet.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDraft {
    pub title: String,
    pub artist: String,
    pub album: Option<String>,
    pub genre: Option<String>,
    pub release_date: RawDate,
    pub lyrics: String,
    pub audio: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Violation {
    EmptyTitle,
    EmptyArtist,
    InvalidDate,
    NoSearchableField,
    DateBoundsInverted,
    NegativeWeight(FieldKind),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyTitle => f.write_str("title non-empty"),
            Violation::EmptyArtist => f.write_str("artist non-empty"),
            Violation::InvalidDate => f.write_str("valid calendar date"),
            Violation::NoSearchableField => f.write_str("no searchable field"),
            Violation::DateBoundsInverted => f.write_str("date bounds inverted"),
            Violation::NegativeWeight(k) => write!(f, "weight for {k} must be a non-negative number"),
        }
    }
}

/// Failed validation, listing every violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct Invalid(pub Vec<Violation>);

impl Invalid {
    pub fn contains(&self, v: Violation) -> bool {
        self.0.contains(&v)
    }
}

fn finish(violations: Vec<Violation>) -> Result<(), Invalid> {
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Invalid(violations))
    }
}

pub fn validate_record(record: &RecordDraft) -> Result<(), Invalid> {
    let mut v = Vec::new();
    if record.title.trim().is_empty() {
        v.push(Violation::EmptyTitle);
    }
    if record.artist.trim().is_empty() {
        v.push(Violation::EmptyArtist);
    }
    if matches!(record.release_date, RawDate::Invalid(_)) {
        v.push(Violation::InvalidDate);
    }
    finish(v)
}

impl RecordDraft {
    /// Validates and assigns `id`.
    pub fn into_record(self, id: SongId) -> Result<SongRecord, Invalid> {
        validate_record(&self)?;
        let RawDate::Valid(release_date) = self.release_date else {
            unreachable!("validated above")
        };
        Ok(SongRecord {
            id,
            title: self.title,
            artist: self.artist,
            album: self.album,
            genre: self.genre,
            release_date,
            lyrics: self.lyrics,
            audio: self.audio,
        })
    }
}

/// A user query. Any subset of fields may be filled in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Query {
    pub lyrics: Option<String>,
    pub title: Option<String>,
    pub artist: Option<String>,
    pub album: Option<String>,
    pub genre: Option<String>,
    pub released_before: Option<NaiveDate>,
    pub released_after: Option<NaiveDate>,
    pub audio: Option<PcmAudio>,
    pub weight_overrides: BTreeMap<FieldKind, f64>,
}

impl Query {
    pub fn text(&self, field: FieldKind) -> Option<&str> {
        match field {
            FieldKind::Lyrics => self.lyrics.as_deref(),
            FieldKind::Title => self.title.as_deref(),
            FieldKind::Artist => self.artist.as_deref(),
            FieldKind::Album => self.album.as_deref(),
            FieldKind::Genre => self.genre.as_deref(),
            FieldKind::Audio => None,
        }
    }

    pub fn set_text(&mut self, field: FieldKind, value: impl Into<String>) {
        let value = Some(value.into());
        match field {
            FieldKind::Lyrics => self.lyrics = value,
            FieldKind::Title => self.title = value,
            FieldKind::Artist => self.artist = value,
            FieldKind::Album => self.album = value,
            FieldKind::Genre => self.genre = value,
            FieldKind::Audio => panic!("audio is not a text field"),
        }
    }

    /// Fields the user filled in, in canonical order.
    pub fn present_fields(&self) -> Vec<FieldKind> {
        FieldKind::ALL
            .into_iter()
            .filter(|&k| match k {
                FieldKind::Audio => self.audio.is_some(),
                _ => self.text(k).is_some(),
            })
            .collect()
    }
}

pub fn validate_query(query: &Query) -> Result<(), Invalid> {
    let mut v = Vec::new();
    if query.present_fields().is_empty() {
        v.push(Violation::NoSearchableField);
    }
    if let (Some(after), Some(before)) = (query.released_after, query.released_before) {
        if after >= before {
            v.push(Violation::DateBoundsInverted);
        }
    }
    for (&k, &w) in &query.weight_overrides {
        if !(w.is_finite() && w >= 0.0) {
            v.push(Violation::NegativeWeight(k));
        }
    }
    finish(v)
}
