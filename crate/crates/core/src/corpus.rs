//! Line-delimited JSON corpus files.
//!
//! One song per line:
//!
//! ```text
//! {"title": "...", "artist": "...", "album": "...", "genre": "...",
//!  "release_date": "1999-06-01", "lyrics": "...", "audio_path": "wav/0001.wav"}
//! ```
//!
//! `album`, `genre` and `audio_path` are optional. `audio_path` is relative
//! to the corpus file's directory. Blank lines are ignored.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{decode_wav, PcmAudio, WavError};
use crate::model::{Invalid, RawDate, RecordDraft, SongId, SongRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub title: String,
    pub artist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub album: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genre: Option<String>,
    pub release_date: String,
    pub lyrics: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("record {index} (line {line}): {source}")]
    Invalid {
        index: usize,
        line: usize,
        #[source]
        source: Invalid,
    },
    #[error("audio for song {song} ({path}): {source}")]
    Audio {
        song: SongId,
        path: PathBuf,
        #[source]
        source: AudioLoadError,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum AudioLoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] WavError),
}

/// Parses corpus text. `base` resolves relative audio paths.
pub fn parse_corpus(text: &str, base: &Path) -> Result<Vec<SongRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let index = records.len();
        let draft = RecordDraft {
            title: parsed.title,
            artist: parsed.artist,
            album: parsed.album,
            genre: parsed.genre,
            release_date: RawDate::parse(&parsed.release_date),
            lyrics: parsed.lyrics,
            audio: parsed.audio_path.map(|p| base.join(p)),
        };
        let record = draft
            .into_record(SongId(index as u32))
            .map_err(|source| CorpusError::Invalid {
                index,
                line,
                source,
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads a corpus file; records get ids `0..K` in file order.
pub fn load_corpus(path: &Path) -> Result<Vec<SongRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_corpus(&text, base)
}

/// Writes records in corpus format. Audio paths are written relative to
/// `base` when possible.
pub fn write_corpus(path: &Path, records: &[SongRecord], base: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = CorpusLine {
            title: r.title.clone(),
            artist: r.artist.clone(),
            album: r.album.clone(),
            genre: r.genre.clone(),
            release_date: r.release_date.format("%Y-%m-%d").to_string(),
            lyrics: r.lyrics.clone(),
            audio_path: r
                .audio
                .as_ref()
                .map(|p| p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.clone())),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Decodes the WAV file referenced by a record, if any.
pub fn load_audio(record: &SongRecord) -> Result<Option<PcmAudio>, CorpusError> {
    let Some(path) = &record.audio else {
        return Ok(None);
    };
    let wrap = |source: AudioLoadError| CorpusError::Audio {
        song: record.id,
        path: path.clone(),
        source,
    };
    let bytes = std::fs::read(path).map_err(|e| wrap(e.into()))?;
    decode_wav(&bytes).map(Some).map_err(|e| wrap(e.into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Violation;

    const LINE: &str = r#"{"title":"A","artist":"B","release_date":"2001-02-03","lyrics":"la la"}"#;

    #[test]
    fn empty_text_gives_no_records() {
        assert!(parse_corpus("", Path::new(".")).unwrap().is_empty());
    }

    #[test]
    fn ids_are_dense_in_file_order() {
        let text = format!("{LINE}\n{LINE}\n\n{LINE}\n");
        let recs = parse_corpus(&text, Path::new(".")).unwrap();
        assert_eq!(recs.iter().map(|r| r.id.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn malformed_line_is_reported() {
        let text = format!("{LINE}\n{{not json\n{LINE}\n");
        match parse_corpus(&text, Path::new(".")) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_record_names_index() {
        let bad = r#"{"title":" ","artist":"B","release_date":"2010-02-30","lyrics":""}"#;
        let text = format!("{LINE}\n{bad}\n");
        match parse_corpus(&text, Path::new(".")) {
            Err(CorpusError::Invalid { index, line, source }) => {
                assert_eq!((index, line), (1, 2));
                assert!(source.contains(Violation::EmptyTitle));
                assert!(source.contains(Violation::InvalidDate));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn audio_paths_resolve_against_base() {
        let line = r#"{"title":"A","artist":"B","release_date":"1999","lyrics":"","audio_path":"wav/a.wav"}"#;
        let recs = parse_corpus(line, Path::new("/data/corpus")).unwrap();
        assert_eq!(recs[0].audio.as_deref(), Some(Path::new("/data/corpus/wav/a.wav")));
        assert_eq!(recs[0].release_date.to_string(), "1999-01-01");
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_corpus(Path::new("/nonexistent/corpus.jsonl")),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut recs = parse_corpus(&format!("{LINE}\n{LINE}"), dir.path()).unwrap();
        recs[1].audio = Some(dir.path().join("x.wav"));
        let path = dir.path().join("c.jsonl");
        write_corpus(&path, &recs, dir.path()).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), recs);
    }
}
