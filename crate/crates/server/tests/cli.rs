use std::path::Path;
use std::process::{Command, Output};

use songseek_core::engine::SearchResponse;

const CORPUS: &str = r#"{"title":"Northern Lights","artist":"Aurora Band","release_date":"1998-03-01","lyrics":"dancing under northern lights\nthe sky is burning green"}
{"title":"Harbor Song","artist":"The Sailors","album":"Tides","genre":"folk","release_date":"1975","lyrics":"ropes and rigging in the morning fog\nwe sail before the dawn"}
{"title":"City Rain","artist":"Neon Nights","release_date":"2010-11-20","lyrics":"rain on the pavement neon in the puddles\ncity never sleeping"}
{"title":"Paper Moon Parade","artist":"Velvet Kings","genre":"jazz","release_date":"1962-07-04","lyrics":"cardboard stars above a paper moon parade\nwe march along the painted boulevard"}
{"title":"Static","artist":"Radio Ghosts","release_date":"2003-01-01","lyrics":"static on the radio\nghosts in the signal paper thin"}
"#;

fn songseek(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_songseek")).args(args).output().unwrap()
}

fn indexed(dir: &Path) -> String {
    let corpus = dir.join("corpus.jsonl");
    std::fs::write(&corpus, CORPUS).unwrap();
    let idx = dir.join("idx");
    let out = songseek(&["index", corpus.to_str().unwrap(), idx.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("indexed 5 songs"));
    idx.to_str().unwrap().to_string()
}

#[test]
fn search_without_fields_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let idx = indexed(dir.path());
    let out = songseek(&["search", &idx]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no searchable field"));
    let out = songseek(&["search", &idx, "--before", "2000"]);
    assert!(!out.status.success());
}

#[test]
fn exact_lyrics_line_ranks_its_song_first() {
    let dir = tempfile::tempdir().unwrap();
    let idx = indexed(dir.path());
    let out = songseek(&["search", &idx, "--lyrics", "we march along the painted boulevard", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resp: SearchResponse = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(resp.results[0].song.id.0, 3);

    let out = songseek(&["search", &idx, "--lyrics", "we march along the painted boulevard"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().next().unwrap().contains("Paper Moon Parade"), "{text}");
}

#[test]
fn filters_weights_and_limit() {
    let dir = tempfile::tempdir().unwrap();
    let idx = indexed(dir.path());
    let out = songseek(&[
        "search", &idx, "--lyrics", "paper", "--title", "paper", "--after", "1970", "--weights", "title=5,lyrics=1",
        "--limit", "1", "--json",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let resp: SearchResponse = serde_json::from_slice(&out.stdout).unwrap();
    // Song 3 is the only title match but predates the bound.
    assert_eq!(resp.results.len(), 1);
    assert_eq!(resp.results[0].song.id.0, 4);
    assert!((resp.applied_weights.weights.values().sum::<f64>() - 1.0).abs() < 1e-12);

    let out = songseek(&["search", &idx, "--title", "x", "--weights", "tempo=1"]);
    assert!(!out.status.success());
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"title\":\"\",\"artist\":\"A\",\"release_date\":\"2001-02-30\",\"lyrics\":\"x\"}\n").unwrap();
    let out = songseek(&["index", bad.to_str().unwrap(), dir.path().join("idx").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("title non-empty") && err.contains("valid calendar date"), "{err}");

    let out = songseek(&["search", dir.path().join("missing").to_str().unwrap(), "--lyrics", "x"]);
    assert!(!out.status.success());
}

#[test]
fn synth_index_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_str().unwrap();
    assert!(songseek(&["synth", root, "--songs", "4", "--seconds", "5"]).status.success());
    let corpus = dir.path().join("corpus.jsonl");
    let idx = dir.path().join("idx");
    assert!(songseek(&["index", corpus.to_str().unwrap(), idx.to_str().unwrap()]).status.success());
    let reports = dir.path().join("reports");
    let out = songseek(&[
        "eval", idx.to_str().unwrap(), "--suite", "noise", "--out", reports.to_str().unwrap(), "--snr", "inf,20",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(reports.join("noise.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("snr_db,inf,4,0,4,4,1.000000"), "{csv}");
    assert_eq!(String::from_utf8_lossy(&out.stdout), csv);

    let out = songseek(&[
        "eval", idx.to_str().unwrap(), "--suite", "sweep", "--param", "toggle_bits", "--values", "0,1", "--bit-flips", "1",
        "--out", reports.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(reports.join("sweep-toggle_bits.csv").exists());

    let out = songseek(&["eval", idx.to_str().unwrap(), "--suite", "sweep", "--out", reports.to_str().unwrap()]);
    assert!(!out.status.success());
}
