//! Combining per-field rankings into the final ranking.
//!
//! Each field's scores are min-max normalized (audio similarities are
//! already absolute and pass through), summed with per-field weights that
//! add up to one, filtered by release date and sorted.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::{FieldKind, Query, SongId, SongRecord};

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Scores one field's search assigned to the songs it returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldResult {
    pub field: FieldKind,
    pub scores: BTreeMap<SongId, f64>,
}

impl FieldResult {
    pub fn new(field: FieldKind, hits: impl IntoIterator<Item = (SongId, f64)>) -> Self {
        Self {
            field,
            scores: hits.into_iter().collect(),
        }
    }

    /// Songs ordered by score descending, ties by id.
    pub fn ranking(&self) -> Vec<SongId> {
        let mut v: Vec<(SongId, f64)> = self.scores.iter().map(|(&s, &v)| (s, v)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v.into_iter().map(|(s, _)| s).collect()
    }
}

/// Min-max normalization to `[0, 1]`. Constant lists (including singletons)
/// become all 1.0. Audio results are returned unchanged.
pub fn normalize(result: &FieldResult) -> FieldResult {
    if result.field == FieldKind::Audio || result.scores.is_empty() {
        return result.clone();
    }
    let min = result.scores.values().copied().fold(f64::INFINITY, f64::min);
    let max = result.scores.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    let scores = result
        .scores
        .iter()
        .map(|(&song, &s)| {
            let v = if range > 0.0 { (s - min) / range } else { 1.0 };
            (song, v)
        })
        .collect();
    FieldResult {
        field: result.field,
        scores,
    }
}

/// Per-field weights `c_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MergeWeights {
    pub weights: BTreeMap<FieldKind, f64>,
}

impl MergeWeights {
    pub fn get(&self, field: FieldKind) -> f64 {
        self.weights.get(&field).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn fields(&self) -> BTreeSet<FieldKind> {
        self.weights.keys().copied().collect()
    }
}

/// Relative importance of each field before renormalization. A title match
/// is less likely to be a false positive than a lyrics match.
pub fn base_weight(field: FieldKind) -> f64 {
    match field {
        FieldKind::Title => 3.0,
        FieldKind::Artist => 2.0,
        FieldKind::Album => 2.0,
        FieldKind::Genre => 1.0,
        FieldKind::Lyrics => 2.0,
        FieldKind::Audio => 4.0,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MergeError {
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("weights cover {weights:?} but results cover {results:?}")]
    FieldMismatch {
        weights: Vec<FieldKind>,
        results: Vec<FieldKind>,
    },
    #[error("no fields to weight")]
    NoFields,
    #[error("weight for {0} must be finite and non-negative")]
    BadWeight(FieldKind),
    #[error("all weights are zero")]
    ZeroWeights,
}

fn renormalized(raw: BTreeMap<FieldKind, f64>) -> Result<MergeWeights, MergeError> {
    if raw.is_empty() {
        return Err(MergeError::NoFields);
    }
    if let Some((&k, _)) = raw.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        return Err(MergeError::BadWeight(k));
    }
    let total: f64 = raw.values().sum();
    if total <= 0.0 {
        return Err(MergeError::ZeroWeights);
    }
    Ok(MergeWeights {
        weights: raw.into_iter().map(|(k, w)| (k, w / total)).collect(),
    })
}

/// Base weights restricted to `present` and scaled to sum to one.
pub fn default_weights(present: &BTreeSet<FieldKind>) -> Result<MergeWeights, MergeError> {
    renormalized(present.iter().map(|&k| (k, base_weight(k))).collect())
}

/// Like [`default_weights`], with `overrides` replacing the base weight of
/// the fields they name. Overrides for fields not in `present` are ignored.
pub fn weights_with_overrides(
    present: &BTreeSet<FieldKind>,
    overrides: &BTreeMap<FieldKind, f64>,
) -> Result<MergeWeights, MergeError> {
    renormalized(
        present
            .iter()
            .map(|&k| (k, overrides.get(&k).copied().unwrap_or_else(|| base_weight(k))))
            .collect(),
    )
}

/// One song in the final ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub song: SongId,
    pub final_score: f64,
    pub breakdown: BTreeMap<FieldKind, f64>,
}

/// `sum_i c_i * r_i`, accumulated in canonical field order.
pub fn weighted_sum(weights: &MergeWeights, breakdown: &BTreeMap<FieldKind, f64>) -> f64 {
    weights
        .weights
        .iter()
        .map(|(k, c)| c * breakdown.get(k).copied().unwrap_or(0.0))
        .fold(0.0, |acc, term| acc + term)
}

/// Weighted sum over the union of songs; a field that did not return a song
/// contributes 0 for it. Output is ordered by `SongId`.
pub fn merge(results: &[FieldResult], weights: &MergeWeights) -> Result<Vec<RankedResult>, MergeError> {
    let sum = weights.sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(MergeError::WeightSum(sum));
    }
    let result_fields: BTreeSet<FieldKind> = results.iter().map(|r| r.field).collect();
    let weight_fields = weights.fields();
    if result_fields != weight_fields || result_fields.len() != results.len() {
        return Err(MergeError::FieldMismatch {
            weights: weight_fields.into_iter().collect(),
            results: results.iter().map(|r| r.field).collect(),
        });
    }

    let mut breakdowns: BTreeMap<SongId, BTreeMap<FieldKind, f64>> = BTreeMap::new();
    for r in results {
        for (&song, &score) in &r.scores {
            breakdowns.entry(song).or_default().insert(r.field, score);
        }
    }
    Ok(breakdowns
        .into_iter()
        .map(|(song, mut breakdown)| {
            for &k in &result_fields {
                breakdown.entry(k).or_insert(0.0);
            }
            RankedResult {
                song,
                final_score: weighted_sum(weights, &breakdown),
                breakdown,
            }
        })
        .collect())
}

/// Whether `date` lies strictly inside the query's date bounds.
pub fn within_bounds(date: NaiveDate, before: Option<NaiveDate>, after: Option<NaiveDate>) -> bool {
    before.is_none_or(|b| date < b) && after.is_none_or(|a| date > a)
}

/// Drops songs released on or after `released_before`, or on or before
/// `released_after`.
pub fn apply_filters(results: Vec<RankedResult>, query: &Query, records: &[SongRecord]) -> Vec<RankedResult> {
    if query.released_before.is_none() && query.released_after.is_none() {
        return results;
    }
    results
        .into_iter()
        .filter(|r| {
            records.get(r.song.index()).is_some_and(|rec| {
                within_bounds(rec.release_date, query.released_before, query.released_after)
            })
        })
        .collect()
}

/// Final score descending, ties by `SongId`, at most `limit`.
pub fn rank(mut results: Vec<RankedResult>, limit: usize) -> Vec<RankedResult> {
    results.sort_by(|a, b| b.final_score.total_cmp(&a.final_score).then(a.song.cmp(&b.song)));
    results.truncate(limit);
    results
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fr(field: FieldKind, scores: &[(u32, f64)]) -> FieldResult {
        FieldResult::new(field, scores.iter().map(|&(s, v)| (SongId(s), v)))
    }

    fn fields(v: &[FieldKind]) -> BTreeSet<FieldKind> {
        v.iter().copied().collect()
    }

    #[test]
    fn min_max() {
        let n = normalize(&fr(FieldKind::Lyrics, &[(0, 2.0), (1, 4.0), (2, 6.0)]));
        assert_eq!(n.scores[&SongId(0)], 0.0);
        assert_eq!(n.scores[&SongId(1)], 0.5);
        assert_eq!(n.scores[&SongId(2)], 1.0);
    }

    #[test]
    fn singleton_and_constant_become_one() {
        let n = normalize(&fr(FieldKind::Title, &[(0, 17.0)]));
        assert_eq!(n.scores[&SongId(0)], 1.0);
        let n = normalize(&fr(FieldKind::Title, &[(0, 3.0), (4, 3.0)]));
        assert!(n.scores.values().all(|&v| v == 1.0));
        assert!(normalize(&fr(FieldKind::Title, &[])).scores.is_empty());
    }

    #[test]
    fn audio_passes_through() {
        let a = fr(FieldKind::Audio, &[(0, 0.7), (1, 0.95)]);
        assert_eq!(normalize(&a), a);
    }

    #[test]
    fn single_field_gets_full_weight() {
        let w = default_weights(&fields(&[FieldKind::Lyrics])).unwrap();
        assert_eq!(w.weights, BTreeMap::from([(FieldKind::Lyrics, 1.0)]));
    }

    #[test]
    fn title_outweighs_lyrics() {
        let w = default_weights(&fields(&[FieldKind::Title, FieldKind::Lyrics])).unwrap();
        assert!((w.get(FieldKind::Title) - 0.6).abs() < 1e-15);
        assert!((w.get(FieldKind::Lyrics) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn audio_artist_renormalized() {
        let w = default_weights(&fields(&[FieldKind::Audio, FieldKind::Artist])).unwrap();
        assert!((w.get(FieldKind::Audio) - 4.0 / 6.0).abs() < 1e-15);
        assert!((w.get(FieldKind::Artist) - 2.0 / 6.0).abs() < 1e-15);
        assert!((w.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn overrides_replace_base_weight() {
        let w = weights_with_overrides(
            &fields(&[FieldKind::Lyrics, FieldKind::Audio]),
            &BTreeMap::from([(FieldKind::Lyrics, 4.0), (FieldKind::Genre, 9.0)]),
        )
        .unwrap();
        assert_eq!(w.get(FieldKind::Lyrics), 0.5);
        assert_eq!(w.get(FieldKind::Audio), 0.5);
        assert_eq!(w.get(FieldKind::Genre), 0.0);
        let zero = BTreeMap::from([(FieldKind::Lyrics, 0.0)]);
        assert_eq!(
            weights_with_overrides(&fields(&[FieldKind::Lyrics]), &zero),
            Err(MergeError::ZeroWeights)
        );
    }

    #[test]
    fn eq1_arithmetic() {
        let weights = MergeWeights {
            weights: BTreeMap::from([(FieldKind::Lyrics, 0.4), (FieldKind::Audio, 0.6)]),
        };
        let results = [
            fr(FieldKind::Lyrics, &[(0, 0.5), (1, 0.9)]),
            fr(FieldKind::Audio, &[(0, 1.0)]),
        ];
        let merged = merge(&results, &weights).unwrap();
        assert!((merged[0].final_score - 0.8).abs() < 1e-12);
        assert!((merged[1].final_score - 0.36).abs() < 1e-12);
        assert_eq!(merged[1].breakdown[&FieldKind::Audio], 0.0);
    }

    #[test]
    fn rejects_bad_weight_sum_and_mismatch() {
        let results = [fr(FieldKind::Lyrics, &[(0, 1.0)])];
        let w = MergeWeights {
            weights: BTreeMap::from([(FieldKind::Lyrics, 1.0 + 2e-9)]),
        };
        assert!(matches!(merge(&results, &w), Err(MergeError::WeightSum(_))));
        let w = MergeWeights {
            weights: BTreeMap::from([(FieldKind::Title, 1.0)]),
        };
        assert!(matches!(merge(&results, &w), Err(MergeError::FieldMismatch { .. })));
    }

    #[test]
    fn rank_orders_and_truncates() {
        let r = |s: u32, v: f64| RankedResult {
            song: SongId(s),
            final_score: v,
            breakdown: BTreeMap::new(),
        };
        let out = rank(vec![r(0, 0.8), r(1, 0.9)], 10);
        assert_eq!(out.iter().map(|x| x.song.0).collect::<Vec<_>>(), vec![1, 0]);
        let out = rank(vec![r(1, 0.5), r(0, 0.5)], 10);
        assert_eq!(out.iter().map(|x| x.song.0).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(rank(vec![r(0, 0.8), r(1, 0.9)], 1).len(), 1);
    }

    #[test]
    fn bounds_are_exclusive() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        assert!(!within_bounds(d("2010-05-05"), Some(d("2008-01-01")), None));
        assert!(!within_bounds(d("2008-01-01"), Some(d("2008-01-01")), None));
        assert!(!within_bounds(d("2008-01-01"), None, Some(d("2008-01-01"))));
        assert!(within_bounds(d("2007-12-31"), Some(d("2008-01-01")), None));
        assert!(within_bounds(d("2007-12-31"), None, None));
    }
}
