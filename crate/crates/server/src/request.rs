//! The query format shared by the CLI and the HTTP API.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use songseek_core::engine::{SearchOptions, DEFAULT_LIMIT};
use songseek_core::model::parse_date;
use songseek_core::{FieldKind, PcmAudio, Query};

/// Structured query text: the `query` part of `POST /search`, and what the
/// `search` subcommand assembles from its flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyrics: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artist: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub album: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
    /// Exclusive upper release-date bound, `YYYY-MM-DD` or `YYYY`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    /// Exclusive lower release-date bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    /// Per-field weight overrides keyed by field name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("`{field}` is not a valid date: {value}")]
    BadDate { field: &'static str, value: String },
    #[error("unknown field `{0}` in weights")]
    UnknownField(String),
    #[error("limit must be positive")]
    ZeroLimit,
}

impl QueryRequest {
    pub fn into_query(self, audio: Option<PcmAudio>) -> Result<(Query, SearchOptions), RequestError> {
        let date = |field: &'static str, value: Option<String>| {
            value
                .map(|v| parse_date(&v).map_err(|_| RequestError::BadDate { field, value: v }))
                .transpose()
        };
        let released_before = date("before", self.before)?;
        let released_after = date("after", self.after)?;
        let weight_overrides = self
            .weights
            .into_iter()
            .map(|(k, v)| {
                k.parse::<FieldKind>()
                    .map(|f| (f, v))
                    .map_err(|_| RequestError::UnknownField(k))
            })
            .collect::<Result<_, _>>()?;
        let limit = match self.limit {
            Some(0) => return Err(RequestError::ZeroLimit),
            Some(n) => n,
            None => DEFAULT_LIMIT,
        };
        let query = Query {
            lyrics: self.lyrics,
            title: self.title,
            artist: self.artist,
            album: self.album,
            genre: self.genre,
            released_before,
            released_after,
            audio,
            weight_overrides,
        };
        Ok((query, SearchOptions { limit, ..Default::default() }))
    }
}

/// Parses `title=2,lyrics=0.5`.
pub fn parse_weights(spec: &str) -> Result<BTreeMap<String, f64>, String> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("expected field=value, got `{pair}`"))?;
            let v: f64 = v.trim().parse().map_err(|_| format!("bad weight `{v}`"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}
