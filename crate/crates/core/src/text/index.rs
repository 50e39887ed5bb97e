use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tokenize::{ngrams, tokenize, FieldProfile};
use crate::model::SongId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub song: SongId,
    pub term_frequency: u32,
}

/// Songs containing one term, sorted by `SongId` with no duplicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostingList {
    pub entries: Vec<Posting>,
}

impl PostingList {
    fn insert(&mut self, posting: Posting) {
        match self.entries.binary_search_by_key(&posting.song, |p| p.song) {
            Ok(_) => unreachable!("song indexed twice"),
            Err(pos) => self.entries.insert(pos, posting),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextIndexError {
    #[error("song {0} is already indexed")]
    DuplicateSong(SongId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TextSearchError {
    /// The query had no terms left after tokenization. Distinct from a query
    /// that simply matched nothing.
    #[error("query is empty after tokenization")]
    EmptyQuery,
}

/// Inverted index over the tokens and N-grams of one textual field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextIndex {
    profile: FieldProfile,
    doc_count: u32,
    doc_lengths: BTreeMap<SongId, u32>,
    postings: BTreeMap<String, PostingList>,
    document_frequency: BTreeMap<String, u32>,
    /// Every song submitted, including those whose text was empty.
    seen: BTreeSet<SongId>,
}

impl TextIndex {
    pub fn new(profile: FieldProfile) -> Self {
        Self {
            profile,
            doc_count: 0,
            doc_lengths: BTreeMap::new(),
            postings: BTreeMap::new(),
            document_frequency: BTreeMap::new(),
            seen: BTreeSet::new(),
        }
    }

    pub fn profile(&self) -> &FieldProfile {
        &self.profile
    }

    /// Number of songs whose text produced at least one token.
    pub fn doc_count(&self) -> u32 {
        self.doc_count
    }

    pub fn doc_length(&self, song: SongId) -> Option<u32> {
        self.doc_lengths.get(&song).copied()
    }

    pub fn postings(&self, term: &str) -> Option<&PostingList> {
        self.postings.get(term)
    }

    pub fn document_frequency(&self, term: &str) -> u32 {
        self.document_frequency.get(term).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &PostingList)> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p))
    }

    pub fn index_document(&mut self, song: SongId, text: &str) -> Result<(), TextIndexError> {
        if !self.seen.insert(song) {
            return Err(TextIndexError::DuplicateSong(song));
        }
        let tokens = tokenize(text, &self.profile);
        if tokens.is_empty() {
            return Ok(());
        }
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for term in ngrams(&tokens, self.profile.ngram_max) {
            *counts.entry(term).or_insert(0) += 1;
        }
        for (term, term_frequency) in counts {
            *self.document_frequency.entry(term.clone()).or_insert(0) += 1;
            self.postings.entry(term).or_default().insert(Posting {
                song,
                term_frequency,
            });
        }
        self.doc_lengths.insert(song, tokens.len() as u32);
        self.doc_count += 1;
        Ok(())
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = f64::from(self.doc_count);
        let df = f64::from(self.document_frequency(term));
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    }

    /// Log-tf times smoothed idf, summed over the distinct query terms.
    /// Results are sorted by score descending then `SongId` ascending.
    pub fn search(
        &self,
        query_text: &str,
        limit: usize,
    ) -> Result<Vec<(SongId, f64)>, TextSearchError> {
        let tokens = tokenize(query_text, &self.profile);
        if tokens.is_empty() {
            return Err(TextSearchError::EmptyQuery);
        }
        let terms: BTreeSet<String> = ngrams(&tokens, self.profile.ngram_max)
            .into_iter()
            .collect();

        let mut scores: BTreeMap<SongId, f64> = BTreeMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in &list.entries {
                let tf = 1.0 + f64::from(p.term_frequency).ln();
                *scores.entry(p.song).or_insert(0.0) += tf * idf;
            }
        }

        let mut hits: Vec<(SongId, f64)> = scores.into_iter().filter(|&(_, s)| s > 0.0).collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.truncate(limit);
        Ok(hits)
    }

    /// Checks the structural invariants by a full scan.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.postings.len() != self.document_frequency.len() {
            return Err("term sets of postings and document_frequency differ".into());
        }
        let mut songs = BTreeSet::new();
        for (term, list) in &self.postings {
            let df = self.document_frequency(term) as usize;
            if df != list.len() {
                return Err(format!("df({term}) = {df} but {} postings", list.len()));
            }
            if !list.entries.windows(2).all(|w| w[0].song < w[1].song) {
                return Err(format!("postings for {term} not strictly sorted"));
            }
            if list.entries.iter().any(|p| p.term_frequency == 0) {
                return Err(format!("zero term frequency under {term}"));
            }
            songs.extend(list.entries.iter().map(|p| p.song));
        }
        if songs.len() != self.doc_count as usize {
            return Err(format!(
                "doc_count {} but {} distinct songs in postings",
                self.doc_count,
                songs.len()
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldKind;

    fn lyrics_index(docs: &[(u32, &str)]) -> TextIndex {
        let mut idx = TextIndex::new(FieldProfile::default_for(FieldKind::Lyrics));
        for &(id, text) in docs {
            idx.index_document(SongId(id), text).unwrap();
        }
        idx
    }

    #[test]
    fn term_frequency_counts_occurrences() {
        let idx = lyrics_index(&[(0, "hello hello")]);
        assert_eq!(
            idx.postings("hello").unwrap().entries,
            vec![Posting {
                song: SongId(0),
                term_frequency: 2
            }]
        );
        assert_eq!(idx.postings("hello hello").unwrap().entries[0].term_frequency, 1);
        assert_eq!(idx.doc_length(SongId(0)), Some(2));
    }

    #[test]
    fn empty_text_is_not_counted() {
        let idx = lyrics_index(&[(0, "the and of"), (1, "")]);
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.terms().count(), 0);
        idx.check_invariants().unwrap();
    }

    #[test]
    fn duplicate_song_rejected() {
        let mut idx = lyrics_index(&[(3, "river")]);
        assert_eq!(
            idx.index_document(SongId(3), "again"),
            Err(TextIndexError::DuplicateSong(SongId(3)))
        );
        let mut idx = lyrics_index(&[(4, "")]);
        assert!(idx.index_document(SongId(4), "river").is_err());
    }

    #[test]
    fn out_of_order_ids_keep_postings_sorted() {
        let idx = lyrics_index(&[(2, "river song"), (0, "river"), (1, "song river")]);
        let songs: Vec<u32> = idx
            .postings("river")
            .unwrap()
            .entries
            .iter()
            .map(|p| p.song.0)
            .collect();
        assert_eq!(songs, vec![0, 1, 2]);
        idx.check_invariants().unwrap();
    }

    #[test]
    fn repeated_term_outranks_single() {
        let idx = lyrics_index(&[(0, "sun sun sun"), (1, "sun moon")]);
        let hits = idx.search("sun", 10).unwrap();
        assert_eq!(hits[0].0, SongId(0));
        assert_eq!(hits[1].0, SongId(1));
        assert!(hits[0].1 > hits[1].1);
    }

    #[test]
    fn absent_term_gives_no_hits() {
        let idx = lyrics_index(&[(0, "sun"), (1, "moon")]);
        assert_eq!(idx.search("stars", 10).unwrap(), vec![]);
    }

    #[test]
    fn stopword_only_query_is_empty_query() {
        let idx = lyrics_index(&[(0, "sun")]);
        assert_eq!(idx.search("the of and", 10), Err(TextSearchError::EmptyQuery));
    }

    #[test]
    fn single_doc_full_text_match() {
        let idx = lyrics_index(&[(0, "a hard day's night")]);
        let hits = idx.search("a hard day's night", 5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, SongId(0));
    }

    #[test]
    fn limit_truncates() {
        let idx = lyrics_index(&[(0, "rain"), (1, "rain"), (2, "rain")]);
        let hits = idx.search("rain", 2).unwrap();
        assert_eq!(hits.iter().map(|h| h.0 .0).collect::<Vec<_>>(), vec![0, 1]);
    }
}
