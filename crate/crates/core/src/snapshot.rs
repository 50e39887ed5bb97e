//! On-disk snapshots of a built [`SearchEngine`].
//!
//! Layout of a snapshot directory:
//!
//! ```text
//! records.idx        corpus records
//! text-<field>.idx   one per textual field
//! fingerprints.idx   canonical posting lists + full fingerprints
//! manifest.json      written last
//! ```
//!
//! Every `.idx` file starts with a header line `songseek-index <version> <digest>`
//! followed by a JSON body. The expanded fingerprint key map is not stored;
//! it is rebuilt on load.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::engine::{BuildError, EngineConfig, SearchEngine};
use crate::fpindex::{FpIndex, FpIndexData};
use crate::model::{FieldKind, SongRecord};
use crate::text::TextIndex;

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const RECORDS: &str = "records.idx";
const FINGERPRINTS: &str = "fingerprints.idx";
const MAGIC: &str = "songseek-index";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    pub song_count: usize,
    pub index_config_digest: String,
    pub config: EngineConfig,
    pub files: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no manifest in {0}")]
    MissingManifest(PathBuf),
    #[error("snapshot format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("snapshot was built with config {found}, expected {expected}")]
    ConfigMismatch { found: String, expected: String },
    #[error("corrupt snapshot file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Build(#[from] BuildError),
}

fn text_file(field: FieldKind) -> String {
    format!("text-{field}.idx")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_index_file<T: Serialize>(path: &Path, digest: &str, body: &T) -> Result<(), SnapshotError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{MAGIC} {FORMAT_VERSION} {digest}").map_err(io_err(path))?;
    serde_json::to_writer(&mut out, body).map_err(|e| SnapshotError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    out.write_all(b"\n").map_err(io_err(path))?;
    out.into_inner()
        .map_err(|e| io_err(path)(e.into_error()))?
        .sync_all()
        .map_err(io_err(path))
}

fn read_index_file<T: DeserializeOwned>(path: &Path, digest: &str) -> Result<T, SnapshotError> {
    let corrupt = |message: String| SnapshotError::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io_err(path))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let [magic, version, file_digest] = parts[..] else {
        return Err(corrupt("bad header".into()));
    };
    if magic != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version: u32 = version.parse().map_err(|_| corrupt("bad version".into()))?;
    if version != FORMAT_VERSION {
        return Err(SnapshotError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if file_digest != digest {
        return Err(SnapshotError::ConfigMismatch {
            found: file_digest.to_string(),
            expected: digest.to_string(),
        });
    }
    serde_json::from_reader(reader).map_err(|e| corrupt(e.to_string()))
}

/// Writes every index of `engine` into `dir`, manifest last.
pub fn persist_indexes(engine: &SearchEngine, dir: &Path) -> Result<CorpusManifest, SnapshotError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join(MANIFEST);
    // A stale manifest would vouch for the half-written files below.
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(io_err(&manifest_path))?;
    }
    let config = engine.config().clone();
    let digest = config.digest();
    let mut files = Vec::new();

    write_index_file(&dir.join(RECORDS), &digest, &engine.records())?;
    files.push(RECORDS.to_string());
    for (field, index) in engine.text_indexes() {
        let name = text_file(*field);
        write_index_file(&dir.join(&name), &digest, index)?;
        files.push(name);
    }
    write_index_file(&dir.join(FINGERPRINTS), &digest, &engine.fingerprint_index().to_data())?;
    files.push(FINGERPRINTS.to_string());

    let manifest = CorpusManifest {
        version: FORMAT_VERSION,
        song_count: engine.records().len(),
        index_config_digest: digest,
        config,
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, SnapshotError> {
    let path = dir.join(MANIFEST);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(SnapshotError::MissingManifest(dir.to_path_buf()))
        }
        Err(e) => return Err(io_err(&path)(e)),
    };
    let manifest: CorpusManifest = serde_json::from_slice(&bytes).map_err(|e| SnapshotError::Corrupt {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if manifest.version != FORMAT_VERSION {
        return Err(SnapshotError::VersionMismatch {
            found: manifest.version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.config.digest() != manifest.index_config_digest {
        return Err(SnapshotError::Corrupt {
            path,
            message: "config does not match its digest".into(),
        });
    }
    Ok(manifest)
}

/// Loads a snapshot, refusing it unless it was built with `expected`.
pub fn load_indexes(dir: &Path, expected: &EngineConfig) -> Result<SearchEngine, SnapshotError> {
    let manifest = read_manifest(dir)?;
    let digest = expected.digest();
    if manifest.index_config_digest != digest {
        return Err(SnapshotError::ConfigMismatch {
            found: manifest.index_config_digest,
            expected: digest,
        });
    }
    let records: Vec<SongRecord> = read_index_file(&dir.join(RECORDS), &digest)?;
    if records.len() != manifest.song_count {
        return Err(SnapshotError::Corrupt {
            path: dir.join(RECORDS),
            message: format!("{} records, manifest says {}", records.len(), manifest.song_count),
        });
    }
    let mut text = BTreeMap::new();
    for field in FieldKind::TEXTUAL {
        let index: TextIndex = read_index_file(&dir.join(text_file(field)), &digest)?;
        text.insert(field, index);
    }
    let fp_path = dir.join(FINGERPRINTS);
    let data: FpIndexData = read_index_file(&fp_path, &digest)?;
    let fingerprints = FpIndex::from_data(data).map_err(|e| SnapshotError::Corrupt {
        path: fp_path,
        message: e.to_string(),
    })?;
    Ok(SearchEngine::from_parts(expected.clone(), records, text, fingerprints)?)
}

/// Loads a snapshot with the configuration recorded in its manifest.
pub fn load_snapshot(dir: &Path) -> Result<SearchEngine, SnapshotError> {
    let manifest = read_manifest(dir)?;
    load_indexes(dir, &manifest.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_date, SongId};

    fn engine() -> SearchEngine {
        let records = vec![SongRecord {
            id: SongId(0),
            title: "Title".into(),
            artist: "Artist".into(),
            album: Some("Album".into()),
            genre: None,
            release_date: parse_date("2001-01-01").unwrap(),
            lyrics: "some words here".into(),
            audio: None,
        }];
        SearchEngine::build(EngineConfig::default(), records, &[None]).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = engine();
        let m = persist_indexes(&e, dir.path()).unwrap();
        assert_eq!(m.song_count, 1);
        assert_eq!(load_indexes(dir.path(), &EngineConfig::default()).unwrap(), e);
        assert_eq!(load_snapshot(dir.path()).unwrap(), e);
    }

    #[test]
    fn config_mismatch_refused() {
        let dir = tempfile::tempdir().unwrap();
        persist_indexes(&engine(), dir.path()).unwrap();
        let other = EngineConfig::default().with_ngram_max(FieldKind::Lyrics, 4);
        assert!(matches!(
            load_indexes(dir.path(), &other),
            Err(SnapshotError::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn empty_dir_has_no_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_snapshot(dir.path()),
            Err(SnapshotError::MissingManifest(_))
        ));
    }

    #[test]
    fn tampered_file_detected() {
        let dir = tempfile::tempdir().unwrap();
        persist_indexes(&engine(), dir.path()).unwrap();
        let path = dir.path().join(FINGERPRINTS);
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replacen(MAGIC, "garbage", 1)).unwrap();
        assert!(matches!(load_snapshot(dir.path()), Err(SnapshotError::Corrupt { .. })));

        fs::write(&path, format!("{MAGIC} 99 abc\n{{}}")).unwrap();
        assert!(matches!(
            load_snapshot(dir.path()),
            Err(SnapshotError::VersionMismatch { found: 99, .. })
        ));
    }

    #[test]
    fn interrupted_persist_leaves_no_manifest() {
        let dir = tempfile::tempdir().unwrap();
        persist_indexes(&engine(), dir.path()).unwrap();
        // Simulate a crash after the manifest was removed but before it was rewritten.
        fs::remove_file(dir.path().join(MANIFEST)).unwrap();
        assert!(matches!(
            load_snapshot(dir.path()),
            Err(SnapshotError::MissingManifest(_))
        ));
    }
}
