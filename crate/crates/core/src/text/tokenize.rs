use serde::{Deserialize, Serialize};

use super::stopwords::is_stopword;
use crate::model::FieldKind;

/// Tokenization and N-gram policy for one textual field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub field: FieldKind,
    pub remove_stopwords: bool,
    pub ngram_max: usize,
}

impl FieldProfile {
    /// Lyrics drop stop words; names and titles keep them because they are
    /// short and every word may matter.
    pub fn default_for(field: FieldKind) -> Self {
        assert!(field.is_textual(), "{field} has no text profile");
        let ngram_max = match field {
            FieldKind::Lyrics | FieldKind::Title => 2,
            _ => 1,
        };
        Self {
            field,
            remove_stopwords: field == FieldKind::Lyrics,
            ngram_max,
        }
    }

    pub fn with_ngram_max(mut self, n: usize) -> Self {
        assert!(n >= 1, "ngram_max must be at least 1");
        self.ngram_max = n;
        self
    }
}

/// Lowercases, splits on runs of non-alphanumeric characters and, when the
/// profile asks for it, drops stop words.
pub fn tokenize(text: &str, profile: &FieldProfile) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !(profile.remove_stopwords && is_stopword(t)))
        .map(str::to_owned)
        .collect()
}

/// All contiguous k-grams for k = 1..=min(n, len), ordered by k then start.
pub fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    assert!(n >= 1, "n must be at least 1");
    let max_k = n.min(tokens.len());
    let mut out = Vec::new();
    for k in 1..=max_k {
        out.extend(tokens.windows(k).map(|w| w.join(" ")));
    }
    out
}
