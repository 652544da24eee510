//! Coarse matching between hypothesis chunks and transcript chunks.
//!
//! Long documents are aligned divide-and-conquer style: the decoded
//! hypothesis is cut into time windows, the reference transcript into
//! fixed-size word windows, and each hypothesis chunk is paired with the
//! reference chunk whose TF-IDF vector it is most similar to. The fine
//! alignment inside each pair happens in `sw_align`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::textnorm::TokenSeq;

/// One decoded word with its time span in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedWord {
    pub text: String,
    pub begin_s: f64,
    pub end_s: f64,
}

impl TimedWord {
    pub fn midpoint_s(&self) -> f64 {
        0.5 * (self.begin_s + self.end_s)
    }
}

/// First-pass decoder output for one audio document: non-overlapping words
/// sorted by begin time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimedHypothesis {
    pub words: Vec<TimedWord>,
    pub audio_duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkSide {
    Hyp,
    Ref,
}

/// A window of a token stream. `token_range` indexes the reference token
/// sequence for REF chunks and the hypothesis word list for HYP chunks;
/// HYP chunks also carry their time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: usize,
    pub side: ChunkSide,
    pub token_range: (usize, usize),
    pub time_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkMatch {
    pub hyp_chunk: usize,
    pub ref_chunk: usize,
    pub similarity: f64,
}

/// Cuts the reference into windows of `words_per_chunk` words advancing by
/// `words_per_chunk - overlap_words`. Punctuation does not count toward the
/// window size but stays inside the chunk ranges, so the union of ranges
/// covers the whole sequence.
pub fn chunk_transcript(
    seq: &TokenSeq,
    words_per_chunk: usize,
    overlap_words: usize,
) -> Vec<Chunk> {
    assert!(words_per_chunk > overlap_words, "chunk size must exceed overlap");
    let word_idx = seq.word_indices();
    if word_idx.is_empty() {
        return vec![Chunk {
            id: 0,
            side: ChunkSide::Ref,
            token_range: (0, seq.len()),
            time_range: None,
        }];
    }
    let step = words_per_chunk - overlap_words;
    let mut chunks = Vec::new();
    let mut start_word = 0;
    while start_word < word_idx.len() {
        let end_word = (start_word + words_per_chunk).min(word_idx.len());
        let token_start = if chunks.is_empty() { 0 } else { word_idx[start_word] };
        let token_end = if end_word == word_idx.len() { seq.len() } else { word_idx[end_word] };
        chunks.push(Chunk {
            id: chunks.len(),
            side: ChunkSide::Ref,
            token_range: (token_start, token_end),
            time_range: None,
        });
        start_word += step;
    }
    chunks
}

/// Cuts the hypothesis into time windows of `window_s` seconds advancing by
/// `window_s - overlap_s`. A word belongs to every window containing its
/// midpoint (half-open, so a midpoint on a boundary goes to the later
/// window); windows without any word produce no chunk.
pub fn chunk_hypothesis(hyp: &TimedHypothesis, window_s: f64, overlap_s: f64) -> Vec<Chunk> {
    assert!(window_s > overlap_s && overlap_s >= 0.0, "window must exceed overlap");
    if hyp.words.is_empty() {
        return Vec::new();
    }
    let step = window_s - overlap_s;
    let midpoints: Vec<f64> = hyp.words.iter().map(|w| w.midpoint_s()).collect();
    let mut chunks = Vec::new();
    let mut k = 0usize;
    while (k as f64) * step < hyp.audio_duration_s {
        let a = k as f64 * step;
        let b = a + window_s;
        let lo = midpoints.partition_point(|&m| m < a);
        let hi = midpoints.partition_point(|&m| m < b);
        if lo < hi {
            chunks.push(Chunk {
                id: chunks.len(),
                side: ChunkSide::Hyp,
                token_range: (lo, hi),
                time_range: Some((a, b)),
            });
        }
        k += 1;
    }
    chunks
}

fn term_counts<'a, I: Iterator<Item = &'a str>>(words: I) -> BTreeMap<&'a str, f64> {
    let mut counts = BTreeMap::new();
    for w in words {
        *counts.entry(w).or_insert(0.0) += 1.0;
    }
    counts
}

fn ref_chunk_words<'a>(seq: &'a TokenSeq, chunk: &Chunk) -> impl Iterator<Item = &'a str> {
    seq.tokens[chunk.token_range.0..chunk.token_range.1]
        .iter()
        .filter(|t| t.is_word())
        .map(|t| t.text.as_str())
}

fn weigh(counts: &BTreeMap<&str, f64>, idf: &BTreeMap<&str, f64>, n_ref: usize) -> BTreeMap<String, f64> {
    let default_idf = ((n_ref as f64 + 1.0) / 1.0).ln() + 1.0;
    counts
        .iter()
        .map(|(term, tf)| {
            let w = tf * idf.get(term).copied().unwrap_or(default_idf);
            (term.to_string(), w)
        })
        .collect()
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(term, wa)| b.get(term).map(|wb| wa * wb))
        .sum();
    let na: f64 = a.values().map(|w| w * w).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|w| w * w).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Pairs each hypothesis chunk with its most similar reference chunk by
/// TF-IDF cosine (raw-count TF; IDF computed over the reference chunk
/// collection). Ties go to the lower reference chunk id; pairs below
/// `threshold` are omitted. Several hypothesis chunks may share one
/// reference chunk.
pub fn match_chunks(
    hyp: &TimedHypothesis,
    hyp_chunks: &[Chunk],
    ref_seq: &TokenSeq,
    ref_chunks: &[Chunk],
    threshold: f64,
) -> Vec<ChunkMatch> {
    let n = ref_chunks.len();
    let ref_counts: Vec<BTreeMap<&str, f64>> = ref_chunks
        .iter()
        .map(|c| term_counts(ref_chunk_words(ref_seq, c)))
        .collect();
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for counts in &ref_counts {
        for term in counts.keys() {
            *df.entry(term).or_insert(0.0) += 1.0;
        }
    }
    let idf: BTreeMap<&str, f64> = df
        .into_iter()
        .map(|(term, d)| (term, ((n as f64 + 1.0) / (d + 1.0)).ln() + 1.0))
        .collect();
    let ref_vecs: Vec<BTreeMap<String, f64>> =
        ref_counts.iter().map(|c| weigh(c, &idf, n)).collect();

    let mut matches = Vec::new();
    for hc in hyp_chunks {
        let words = hyp.words[hc.token_range.0..hc.token_range.1]
            .iter()
            .map(|w| w.text.as_str());
        let hyp_vec = weigh(&term_counts(words), &idf, n);
        let mut best: Option<(f64, usize)> = None;
        for (rid, rv) in ref_vecs.iter().enumerate() {
            let sim = cosine(&hyp_vec, rv);
            if best.map_or(true, |(bs, _)| sim > bs) {
                best = Some((sim, rid));
            }
        }
        if let Some((sim, rid)) = best {
            if sim >= threshold {
                matches.push(ChunkMatch { hyp_chunk: hc.id, ref_chunk: rid, similarity: sim });
            }
        }
    }
    matches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textnorm::normalize_text;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Letter-only word names so the text normalizer passes them through.
    fn wname(mut i: usize) -> String {
        let mut s = String::from("W");
        loop {
            s.push((b'A' + (i % 26) as u8) as char);
            i /= 26;
            if i == 0 {
                break;
            }
        }
        s
    }

    fn hyp_from(words: &[(&str, f64, f64)], duration: f64) -> TimedHypothesis {
        TimedHypothesis {
            words: words
                .iter()
                .map(|(t, b, e)| TimedWord { text: t.to_string(), begin_s: *b, end_s: *e })
                .collect(),
            audio_duration_s: duration,
        }
    }

    fn word_window(seq: &TokenSeq, chunk: &Chunk) -> usize {
        seq.tokens[chunk.token_range.0..chunk.token_range.1]
            .iter()
            .filter(|t| t.is_word())
            .count()
    }

    #[test]
    fn transcript_window_arithmetic() {
        let text = (0..250).map(wname).collect::<Vec<_>>().join(" ");
        let seq = normalize_text(&text);
        let chunks = chunk_transcript(&seq, 100, 0);
        assert_eq!(chunks.len(), 3);
        assert_eq!(
            chunks.iter().map(|c| word_window(&seq, c)).collect::<Vec<_>>(),
            vec![100, 100, 50]
        );

        let short = normalize_text(&(0..50).map(wname).collect::<Vec<_>>().join(" "));
        assert_eq!(chunk_transcript(&short, 100, 50).len(), 1);

        let long = normalize_text(&(0..300).map(wname).collect::<Vec<_>>().join(" "));
        let overlapped = chunk_transcript(&long, 100, 50);
        assert_eq!(overlapped.len(), 6, "starts at words 0,50,...,250");
    }

    #[test]
    fn transcript_chunks_cover_all_tokens_including_punct() {
        let text = "alpha beta, gamma delta. epsilon zeta!";
        let seq = normalize_text(text);
        let chunks = chunk_transcript(&seq, 2, 1);
        let mut covered = vec![false; seq.len()];
        for c in &chunks {
            for slot in &mut covered[c.token_range.0..c.token_range.1] {
                *slot = true;
            }
        }
        assert!(covered.iter().all(|&x| x), "union of chunk ranges must cover the sequence");
    }

    #[test]
    fn hypothesis_windows_and_midpoints() {
        let hyp = hyp_from(
            &[("A", 1.0, 2.0), ("B", 29.9, 30.1), ("C", 61.0, 62.0)],
            90.0,
        );
        let chunks = chunk_hypothesis(&hyp, 30.0, 0.0);
        assert_eq!(chunks.len(), 3);
        // Midpoint 30.0 sits on the boundary of [0,30) and [30,60): it goes right.
        assert_eq!(chunks[0].token_range, (0, 1));
        assert_eq!(chunks[1].token_range, (1, 2));
        assert_eq!(chunks[2].token_range, (2, 3));

        assert!(chunk_hypothesis(&hyp_from(&[], 90.0), 30.0, 0.0).is_empty());
    }

    #[test]
    fn overlapping_windows_share_words() {
        // Windows advance by 25s: [0,30), [25,55), [50,80). Midpoint 27.0
        // falls inside the first two.
        let hyp = hyp_from(&[("A", 26.5, 27.5)], 60.0);
        let chunks = chunk_hypothesis(&hyp, 30.0, 5.0);
        let owners: Vec<_> = chunks.iter().filter(|c| c.token_range == (0, 1)).collect();
        assert_eq!(owners.len(), 2);
    }

    #[test]
    fn identical_streams_match_diagonally() {
        // Chunk-unique vocabulary makes the expected pairing unambiguous.
        let words: Vec<String> = (0..60).map(|i| wname(i / 20)).collect();
        let seq = normalize_text(&words.join(" "));
        let ref_chunks = chunk_transcript(&seq, 20, 0);
        let timed: Vec<(String, f64, f64)> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as f64, i as f64 + 0.9))
            .collect();
        let hyp = TimedHypothesis {
            words: timed
                .into_iter()
                .map(|(t, b, e)| TimedWord { text: t, begin_s: b, end_s: e })
                .collect(),
            audio_duration_s: 60.0,
        };
        let hyp_chunks = chunk_hypothesis(&hyp, 20.0, 0.0);
        let matches = match_chunks(&hyp, &hyp_chunks, &seq, &ref_chunks, 0.2);
        assert_eq!(matches.len(), 3);
        for m in &matches {
            assert_eq!(m.hyp_chunk, m.ref_chunk);
            assert!(m.similarity > 0.99);
        }
    }

    #[test]
    fn ties_prefer_the_lower_reference_id() {
        // Two identical reference chunks; the hypothesis must match the first.
        let seq = normalize_text("X X X X Y Y Y Y X X X X");
        let ref_chunks = chunk_transcript(&seq, 4, 0);
        assert_eq!(ref_chunks.len(), 3);
        let hyp = hyp_from(&[("X", 0.0, 1.0), ("X", 1.0, 2.0)], 10.0);
        let hyp_chunks = chunk_hypothesis(&hyp, 10.0, 0.0);
        let matches = match_chunks(&hyp, &hyp_chunks, &seq, &ref_chunks, 0.1);
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].ref_chunk, 0);
    }

    #[test]
    fn below_threshold_matches_are_omitted() {
        let seq = normalize_text("ALPHA BETA GAMMA");
        let ref_chunks = chunk_transcript(&seq, 100, 0);
        let hyp = hyp_from(&[("DELTA", 0.0, 1.0)], 2.0);
        let hyp_chunks = chunk_hypothesis(&hyp, 30.0, 5.0);
        assert!(match_chunks(&hyp, &hyp_chunks, &seq, &ref_chunks, 0.2).is_empty());
    }

    #[test]
    fn similarity_agrees_with_a_naive_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let vocab: Vec<String> = (0..8).map(wname).collect();
            let ref_words: Vec<String> =
                (0..40).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect();
            let hyp_words: Vec<String> =
                (0..15).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect();
            let seq = normalize_text(&ref_words.join(" "));
            let ref_chunks = chunk_transcript(&seq, 10, 5);
            let hyp = TimedHypothesis {
                words: hyp_words
                    .iter()
                    .enumerate()
                    .map(|(i, w)| TimedWord {
                        text: w.clone(),
                        begin_s: i as f64,
                        end_s: i as f64 + 0.8,
                    })
                    .collect(),
                audio_duration_s: 15.0,
            };
            let hyp_chunks = chunk_hypothesis(&hyp, 15.0, 0.0);
            let matches = match_chunks(&hyp, &hyp_chunks, &seq, &ref_chunks, 0.0);

            // Naive recomputation with plain loops.
            let n = ref_chunks.len() as f64;
            let tf = |words: &[String]| {
                let mut m: BTreeMap<String, f64> = BTreeMap::new();
                for w in words {
                    *m.entry(w.clone()).or_insert(0.0) += 1.0;
                }
                m
            };
            let ref_tfs: Vec<BTreeMap<String, f64>> = ref_chunks
                .iter()
                .map(|c| {
                    tf(&seq.tokens[c.token_range.0..c.token_range.1]
                        .iter()
                        .filter(|t| t.is_word())
                        .map(|t| t.text.clone())
                        .collect::<Vec<_>>())
                })
                .collect();
            let idf = |term: &str| {
                let df = ref_tfs.iter().filter(|m| m.contains_key(term)).count() as f64;
                ((n + 1.0) / (df + 1.0)).ln() + 1.0
            };
            let weigh = |m: &BTreeMap<String, f64>| {
                m.iter().map(|(t, c)| (t.clone(), c * idf(t))).collect::<BTreeMap<_, _>>()
            };
            let hv = weigh(&tf(&hyp_words));
            let mut best = (f64::MIN, usize::MAX);
            for (rid, rm) in ref_tfs.iter().enumerate() {
                let rv = weigh(rm);
                let dot: f64 = hv
                    .iter()
                    .filter_map(|(t, a)| rv.get(t).map(|b| a * b))
                    .sum();
                let na = hv.values().map(|x| x * x).sum::<f64>().sqrt();
                let nb = rv.values().map(|x| x * x).sum::<f64>().sqrt();
                let sim = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
                if sim > best.0 {
                    best = (sim, rid);
                }
            }
            assert_eq!(matches.len(), 1);
            assert_eq!(matches[0].ref_chunk, best.1);
            assert!((matches[0].similarity - best.0).abs() < 1e-12);
        }
    }
}
