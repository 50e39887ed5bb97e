mod common;

use std::collections::BTreeSet;

use common::{brute_force_candidates, brute_force_search, fingerprint_store, synthetic_engine};
use proptest::prelude::*;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use songseek_core::eval::noise::{add_white_noise, NoiseSpec};
use songseek_core::fingerprint::{FingerprintSequence, SubFingerprint};
use songseek_core::fpindex::{expand_keys, Alignment, keys_per_word, FineOutcome, FpIndex, FpIndexConfig, FpPosting};
use songseek_core::SongId;

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn excerpt(words: &[SubFingerprint], start: usize, len: usize) -> FingerprintSequence {
    FingerprintSequence::query(words[start..start + len].to_vec())
}

#[test]
fn keys_per_word_matches_binomial_sum() {
    for n in 0..=4u32 {
        let expected = 1 + (1..=u64::from(n)).map(|i| binomial(32, i)).sum::<u64>();
        assert_eq!(keys_per_word(n), expected);
    }
    assert_eq!(keys_per_word(1), 33);
    assert_eq!(keys_per_word(2), 529);
}

#[test]
fn expanded_keys_are_exactly_the_hamming_ball() {
    let word = SubFingerprint(0x9e37_79b9);
    for n in 0..=2u32 {
        let keys: BTreeSet<u32> = expand_keys(word, n).into_iter().collect();
        assert_eq!(keys.len() as u64, keys_per_word(n));
        assert!(keys.iter().all(|k| (k ^ word.0).count_ones() <= n));
    }
}

#[test]
fn toggle_completeness_on_synthetic_corpus() {
    let fx = synthetic_engine(10, 5.0, 3);
    let idx = fx.engine.fingerprint_index();
    for (song, words) in fingerprint_store(&fx.engine) {
        for (offset, &f) in words.iter().enumerate() {
            let list = idx.posting_list(f).expect("stored word has a posting list");
            assert!(list.contains(&FpPosting { song, offset: offset as u32 }));
            assert!(idx.resolve(f.0).contains(&f.0));
            for bit in 0..32 {
                assert!(idx.resolve(f.flip(bit).0).contains(&f.0), "{song:?} offset {offset} bit {bit}");
            }
        }
    }
}

#[test]
fn key_count_equals_formula_without_collisions() {
    // Words pairwise further apart than 2n bits cannot share a variant.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut words: Vec<u32> = Vec::new();
    while words.len() < 40 {
        let w: u32 = rng.random();
        if words.iter().all(|&o| (o ^ w).count_ones() > 4) {
            words.push(w);
        }
    }
    let seq = FingerprintSequence::query(words.iter().copied().map(SubFingerprint).collect());
    for n in 0..=2u32 {
        let mut idx = FpIndex::new(FpIndexConfig { toggle_bits: n, ..Default::default() }).unwrap();
        idx.insert_song(SongId(0), &seq).unwrap();
        assert_eq!(idx.key_count() as u64, words.len() as u64 * keys_per_word(n), "n = {n}");
    }
}

#[test]
fn flipped_excerpt_scores_by_popcount() {
    let fx = synthetic_engine(4, 6.0, 8);
    let store = fingerprint_store(&fx.engine);
    let idx = fx.engine.fingerprint_index();
    let song = SongId(2);
    let query = excerpt(&store[&song], 40, 100);

    // 160 distinct bits across the excerpt: positions 0..80 get two flips each.
    let mut flipped = query.clone();
    for (i, w) in flipped.subfps.iter_mut().take(80).enumerate() {
        *w = w.flip(i as u32 % 32).flip((i as u32 + 7) % 32);
    }
    let popcount: u32 = query.subfps.iter().zip(&flipped.subfps).map(|(a, b)| a.hamming(*b)).sum();
    assert_eq!(popcount, 160);
    let hits = idx.search_detailed(&flipped, 10).unwrap();
    let hit = hits.iter().find(|h| h.song == song).expect("true song accepted");
    assert_eq!(hit.ber, 160.0 / 3200.0);
    assert_eq!(hit.similarity, 0.95);
    assert_eq!(hit.shift, 40);
}

#[test]
fn one_flip_per_word_still_matches_at_n1() {
    let fx = synthetic_engine(10, 6.0, 4);
    let store = fingerprint_store(&fx.engine);
    let words = &store[&SongId(4)];
    let clip = fx.engine.extract_query(&fx.audio[4].1.slice(64 * 60, 3 * 5512)).unwrap();
    assert_eq!(clip.subfps[..], words[60..60 + clip.len()]);
    let flipped = FingerprintSequence::query(clip.subfps.iter().enumerate().map(|(i, w)| w.flip(i as u32 * 7 % 32)).collect());
    let hits = fx.engine.fingerprint_index().search_audio(&flipped, 5).unwrap();
    assert_eq!(hits[0].0, SongId(4));
    assert_eq!(hits[0].1, 1.0 - 1.0 / 32.0);
}

#[test]
fn complemented_excerpt_is_rejected() {
    let fx = synthetic_engine(3, 5.0, 1);
    let store = fingerprint_store(&fx.engine);
    let idx = fx.engine.fingerprint_index();
    let query = excerpt(&store[&SongId(1)], 10, 50);
    let candidate = idx
        .coarse_search(&query)
        .into_iter()
        .find(|c| c.song == SongId(1))
        .unwrap();
    let inverted = FingerprintSequence::query(query.subfps.iter().map(|w| SubFingerprint(!w.0)).collect());
    assert!(matches!(idx.fine_search(&candidate, &inverted), FineOutcome::BelowThreshold { .. }));
    let dominant = idx
        .reconfigured(FpIndexConfig { alignment: Alignment::DominantShift, ..idx.config().clone() })
        .unwrap();
    assert_eq!(
        dominant.fine_search(&candidate, &inverted),
        FineOutcome::BelowThreshold { ber: 1.0, shift: 10 }
    );
}

#[test]
fn silence_finds_nothing_in_a_corpus_without_zero_words() {
    let fx = synthetic_engine(10, 5.0, 2);
    let store = fingerprint_store(&fx.engine);
    assert!(store.values().flatten().all(|w| w.0 != 0));
    let silence = songseek_core::PcmAudio::new(vec![0.0; 3 * 5512], 5512);
    assert!(fx.engine.search_audio(&silence, 10).unwrap().is_empty());
}

/// Clean, noisy and bit-corrupted clip queries on a 20-song corpus.
fn oracle_queries(fx: &common::Fixture) -> Vec<FingerprintSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut queries = Vec::new();
    for (song, audio) in &fx.audio {
        let start = 64 * rng.random_range(0..(audio.len() - 3 * 5512) / 64);
        let clip = audio.slice(start, 3 * 5512);
        queries.push(fx.engine.extract_query(&clip).unwrap());
        for snr in [20.0, 10.0, 5.0, 0.0] {
            let noisy = add_white_noise(&clip, NoiseSpec { snr_db: snr, seed: u64::from(song.0) }).unwrap();
            queries.push(fx.engine.extract_query(&noisy).unwrap());
        }
        let flips = rng.random_range(2..6);
        queries.push(songseek_core::eval::corrupt_bits(&queries[queries.len() - 5], flips, rng.random()));
    }
    queries
}

#[test]
fn search_matches_exhaustive_scan() {
    let fx = synthetic_engine(20, 8.0, 12);
    let store = fingerprint_store(&fx.engine);
    let idx = fx.engine.fingerprint_index();
    let config = idx.config().clone();
    for (i, q) in oracle_queries(&fx).iter().enumerate() {
        let coarse: BTreeSet<SongId> = idx.coarse_search(q).into_iter().map(|c| c.song).collect();
        let expected = brute_force_candidates(&store, &q.subfps, config.toggle_bits, config.min_matches(q.len()));
        assert_eq!(coarse, expected, "query {i}: candidate sets differ");
        let oracle = brute_force_search(&store, &coarse, &q.subfps, config.min_overlap_fraction, config.ber_threshold);
        assert_eq!(idx.search_audio(q, usize::MAX).unwrap(), oracle, "query {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn key_count_bounded(words in prop::collection::vec(any::<u32>(), 0..30), n in 0u32..=2) {
        let seq = FingerprintSequence::query(words.iter().copied().map(SubFingerprint).collect());
        let distinct: BTreeSet<u32> = words.iter().copied().collect();
        let mut idx = FpIndex::new(FpIndexConfig { toggle_bits: n, ..Default::default() }).unwrap();
        idx.insert_song(SongId(0), &seq).unwrap();
        prop_assert!(idx.key_count() as u64 <= distinct.len() as u64 * keys_per_word(n));
    }

    #[test]
    fn posting_lists_sorted(songs in prop::collection::vec(prop::collection::vec(0u32..64, 0..40), 1..6)) {
        let mut idx = FpIndex::new(FpIndexConfig::default()).unwrap();
        for (i, words) in songs.iter().enumerate().rev() {
            let seq = FingerprintSequence::query(words.iter().copied().map(SubFingerprint).collect());
            idx.insert_song(SongId(i as u32), &seq).unwrap();
        }
        for w in 0u32..64 {
            if let Some(list) = idx.posting_list(SubFingerprint(w)) {
                prop_assert!(list.windows(2).all(|p| p[0] < p[1]));
                for p in list {
                    prop_assert_eq!(songs[p.song.index()][p.offset as usize], w);
                }
            }
        }
    }

    #[test]
    fn more_flips_never_raise_similarity(
        start in 0usize..200,
        positions in prop::collection::btree_set(0usize..120, 1..120),
        seed in any::<u64>(),
        fewer in 0usize..6,
        extra in 1usize..6,
    ) {
        let fx = monotone_fixture();
        let words = &fx.1;
        let query = excerpt(words, start, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Nested flip sets: the larger one contains the smaller.
        let masks: Vec<u32> = positions
            .iter()
            .map(|_| sample(&mut rng, 32, fewer + extra).into_iter().fold(0u32, |m, b| m | 1 << b))
            .collect();
        let apply = |k: usize| {
            let mut q = query.clone();
            for (&p, &mask) in positions.iter().zip(&masks) {
                let keep = mask_prefix(mask, k);
                q.subfps[p] = SubFingerprint(q.subfps[p].0 ^ keep);
            }
            q
        };
        let similarity = |q: &FingerprintSequence| {
            fx.0.search_audio(q, usize::MAX)
                .unwrap()
                .into_iter()
                .find(|(s, _)| *s == SongId(0))
                .map_or(0.0, |(_, sim)| sim)
        };
        prop_assert!(similarity(&apply(fewer + extra)) <= similarity(&apply(fewer)));
    }
}

/// The lowest `k` set bits of `mask`.
fn mask_prefix(mask: u32, k: usize) -> u32 {
    let mut out = 0;
    let mut rest = mask;
    for _ in 0..k {
        if rest == 0 {
            break;
        }
        let low = rest & rest.wrapping_neg();
        out |= low;
        rest ^= low;
    }
    out
}

fn monotone_fixture() -> &'static (FpIndex, Vec<SubFingerprint>) {
    static CELL: std::sync::OnceLock<(FpIndex, Vec<SubFingerprint>)> = std::sync::OnceLock::new();
    CELL.get_or_init(|| {
        let fx = synthetic_engine(5, 6.0, 31);
        let words = fx.engine.fingerprint_index().fingerprint(SongId(0)).unwrap().to_vec();
        (fx.engine.fingerprint_index().clone(), words)
    })
}

