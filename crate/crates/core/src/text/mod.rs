//! Lyrics and metadata search: tokenization, N-gram inverted index, tf-idf.

mod index;
pub mod stopwords;
mod tokenize;

pub use index::{Posting, PostingList, TextIndex, TextIndexError, TextSearchError};
pub use tokenize::{ngrams, tokenize, FieldProfile};
