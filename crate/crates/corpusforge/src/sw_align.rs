//! Local alignment of hypothesis chunks against transcript chunks and
//! stitching of the per-chunk alignments into one timed transcript.
//!
//! The aligner is a Smith-Waterman variant with two extra zero-cost moves:
//! reference punctuation is consumed by SKIP_PUNCT and hypothesis silence
//! markers by SKIP_SIL, so neither can be scored as a mismatch. Silence
//! markers are synthesized beforehand for inter-word gaps longer than
//! [`SIL_GAP_THRESH_S`]; they are what lets the segmenter pair punctuation
//! with measurable pauses later on.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk_match::{Chunk, ChunkMatch, TimedHypothesis};
use crate::textnorm::{Token, TokenSeq, SIL};

/// Inter-word gaps longer than this get an explicit silence marker on the
/// hypothesis side before alignment.
pub const SIL_GAP_THRESH_S: f64 = 0.1;

/// A run of more than this many consecutive reference-word deletions
/// terminates the local alignment; only the higher-scoring side survives.
pub const DEL_RUN_LIMIT: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlignKind {
    Match,
    Sub,
    Ins,
    Del,
    SkipPunct,
    SkipSil,
}

/// One alignment step. MATCH/SUB carry both indices, INS and SKIP_SIL only
/// the hypothesis index, DEL and SKIP_PUNCT only the reference index.
/// Hypothesis indices point into the silence-marked symbol list, reference
/// indices into the token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignOp {
    pub kind: AlignKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ref_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkAlignment {
    #[serde(rename = "match")]
    pub chunk_match: ChunkMatch,
    pub ops: Vec<AlignOp>,
    pub score: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scoring {
    pub matched: i64,
    pub mismatch: i64,
    pub gap: i64,
    pub skip: i64,
}

impl Default for Scoring {
    fn default() -> Self {
        Scoring { matched: 2, mismatch: -1, gap: -1, skip: 0 }
    }
}

/// Hypothesis-side alignment symbol: a decoded word, or a silence marker
/// synthesized for a long inter-word gap (`word` is None for those).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypSym {
    pub text: String,
    pub word: Option<usize>,
}

/// The hypothesis word list with silence markers spliced in, plus the
/// position of each original word in the symbol list.
#[derive(Debug, Clone)]
pub struct MarkedHyp {
    pub syms: Vec<HypSym>,
    word_pos: Vec<usize>,
}

impl MarkedHyp {
    /// Symbol range covering `word_range`, without any trailing marker.
    pub fn sym_range(&self, word_range: (usize, usize)) -> (usize, usize) {
        assert!(word_range.1 > word_range.0, "empty word range");
        (self.word_pos[word_range.0], self.word_pos[word_range.1 - 1] + 1)
    }
}

pub fn mark_silences(hyp: &TimedHypothesis, gap_thresh_s: f64) -> MarkedHyp {
    let mut syms = Vec::with_capacity(hyp.words.len());
    let mut word_pos = Vec::with_capacity(hyp.words.len());
    for (i, w) in hyp.words.iter().enumerate() {
        word_pos.push(syms.len());
        syms.push(HypSym { text: w.text.clone(), word: Some(i) });
        if let Some(next) = hyp.words.get(i + 1) {
            if next.begin_s - w.end_s > gap_thresh_s {
                syms.push(HypSym { text: SIL.to_string(), word: None });
            }
        }
    }
    MarkedHyp { syms, word_pos }
}

fn op_score(kind: AlignKind, s: Scoring) -> i64 {
    match kind {
        AlignKind::Match => s.matched,
        AlignKind::Sub => s.mismatch,
        AlignKind::Ins | AlignKind::Del => s.gap,
        AlignKind::SkipPunct | AlignKind::SkipSil => s.skip,
    }
}

/// Max-scoring local alignment of a hypothesis symbol slice against a
/// reference token slice. Ties between moves of equal value are broken
/// preferring MATCH, then SUB, DEL, INS, SKIP_PUNCT, SKIP_SIL; a move worth
/// nothing loses to restarting, so alignments never begin or end with
/// zero-cost skips. Indices in the returned ops are local to the slices.
pub fn sw_align(hyp: &[HypSym], ref_tokens: &[Token], scoring: Scoring) -> (Vec<AlignOp>, i64) {
    assert!(!hyp.is_empty() && !ref_tokens.is_empty(), "alignment inputs must be non-empty");
    let m = hyp.len();
    let n = ref_tokens.len();
    let idx = |i: usize, j: usize| i * (n + 1) + j;
    let mut score = vec![0i64; (m + 1) * (n + 1)];
    // 0 = stop (restart floor), 1 = diagonal, 2 = up (hyp consumed),
    // 3 = left (ref consumed)
    let mut dir = vec![0u8; (m + 1) * (n + 1)];
    let mut best = (0i64, 0usize, 0usize);

    for i in 1..=m {
        let hyp_word = hyp[i - 1].word.is_some();
        for j in 1..=n {
            let ref_word = ref_tokens[j - 1].is_word();
            // (value, tie rank, direction); lower rank wins on equal value.
            let mut cand: [(i64, u8, u8); 3] = [(i64::MIN, u8::MAX, 0); 3];
            let mut k = 0;
            if hyp_word && ref_word {
                let (delta, rank) = if hyp[i - 1].text == ref_tokens[j - 1].text {
                    (scoring.matched, 0)
                } else {
                    (scoring.mismatch, 1)
                };
                cand[k] = (score[idx(i - 1, j - 1)] + delta, rank, 1);
                k += 1;
            }
            let (delta, rank) = if ref_word { (scoring.gap, 2) } else { (scoring.skip, 4) };
            cand[k] = (score[idx(i, j - 1)] + delta, rank, 3);
            k += 1;
            let (delta, rank) = if hyp_word { (scoring.gap, 3) } else { (scoring.skip, 5) };
            cand[k] = (score[idx(i - 1, j)] + delta, rank, 2);
            k += 1;

            let mut bv = i64::MIN;
            let mut brank = u8::MAX;
            let mut bd = 0u8;
            for &(val, rank, d) in &cand[..k] {
                if val > bv || (val == bv && rank < brank) {
                    bv = val;
                    brank = rank;
                    bd = d;
                }
            }
            let cell = idx(i, j);
            if bv <= 0 {
                score[cell] = 0;
                dir[cell] = 0;
            } else {
                score[cell] = bv;
                dir[cell] = bd;
                if bv > best.0 {
                    best = (bv, i, j);
                }
            }
        }
    }

    let (_, mut i, mut j) = best;
    let mut ops = Vec::new();
    loop {
        match dir[idx(i, j)] {
            0 => break,
            1 => {
                let kind = if hyp[i - 1].text == ref_tokens[j - 1].text {
                    AlignKind::Match
                } else {
                    AlignKind::Sub
                };
                ops.push(AlignOp { kind, hyp_index: Some(i - 1), ref_index: Some(j - 1) });
                i -= 1;
                j -= 1;
            }
            2 => {
                let kind =
                    if hyp[i - 1].word.is_some() { AlignKind::Ins } else { AlignKind::SkipSil };
                ops.push(AlignOp { kind, hyp_index: Some(i - 1), ref_index: None });
                i -= 1;
            }
            3 => {
                let kind =
                    if ref_tokens[j - 1].is_word() { AlignKind::Del } else { AlignKind::SkipPunct };
                ops.push(AlignOp { kind, hyp_index: None, ref_index: Some(j - 1) });
                j -= 1;
            }
            _ => unreachable!(),
        }
    }
    ops.reverse();
    enforce_del_run_limit(ops, scoring)
}

/// Splits the op list at deletion runs longer than [`DEL_RUN_LIMIT`] and
/// keeps the highest-scoring piece (ties go to the earlier piece). Runs are
/// counted over consecutive DEL ops; SKIP_PUNCT inside a run neither breaks
/// nor lengthens it, since punctuation between deleted words belongs to the
/// same dead region.
fn enforce_del_run_limit(ops: Vec<AlignOp>, scoring: Scoring) -> (Vec<AlignOp>, i64) {
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    let mut piece_start = 0usize;
    let mut k = 0usize;
    while k < ops.len() {
        if ops[k].kind == AlignKind::Del {
            let run_start = k;
            let mut dels = 0usize;
            let mut end = k;
            while end < ops.len()
                && matches!(ops[end].kind, AlignKind::Del | AlignKind::SkipPunct)
            {
                if ops[end].kind == AlignKind::Del {
                    dels += 1;
                }
                end += 1;
            }
            if dels > DEL_RUN_LIMIT {
                pieces.push((piece_start, run_start));
                piece_start = end;
            }
            k = end;
        } else {
            k += 1;
        }
    }
    pieces.push((piece_start, ops.len()));

    let scored: Vec<i64> = pieces
        .iter()
        .map(|&(a, b)| ops[a..b].iter().map(|op| op_score(op.kind, scoring)).sum())
        .collect();
    let mut keep = 0usize;
    for (p, &s) in scored.iter().enumerate() {
        if s > scored[keep] {
            keep = p;
        }
    }
    let (a, b) = pieces[keep];
    (ops[a..b].to_vec(), scored[keep])
}

/// Aligns one matched chunk pair and lifts the op indices into document
/// coordinates (hypothesis symbol index, reference token index).
pub fn align_chunk_pair(
    marked: &MarkedHyp,
    ref_seq: &TokenSeq,
    hyp_chunk: &Chunk,
    ref_chunk: &Chunk,
    cm: &ChunkMatch,
    scoring: Scoring,
) -> ChunkAlignment {
    let (s0, s1) = marked.sym_range(hyp_chunk.token_range);
    let (a, b) = ref_chunk.token_range;
    let (mut ops, score) = sw_align(&marked.syms[s0..s1], &ref_seq.tokens[a..b], scoring);
    for op in &mut ops {
        if let Some(h) = &mut op.hyp_index {
            *h += s0;
        }
        if let Some(r) = &mut op.ref_index {
            *r += a;
        }
    }
    ChunkAlignment { chunk_match: cm.clone(), ops, score }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlignLabel {
    Aligned,
    Unaligned,
}

/// The reference transcript with per-word timing and alignment bookkeeping,
/// the segmenter's working representation. Words are addressed by ordinal
/// (position among WORD tokens); `word_tokens` maps ordinals back to token
/// indices. `pause_after` is per token and carries each silence gap on the
/// token immediately preceding the next timed word, so a pause lands on the
/// punctuation it is co-located with rather than on the word before it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimedTranscript {
    pub ref_seq: TokenSeq,
    pub word_tokens: Vec<usize>,
    pub word_times: Vec<Option<(f64, f64)>>,
    pub pause_after: Vec<f64>,
    pub align_label: Vec<AlignLabel>,
    pub word_ops: Vec<Option<AlignKind>>,
    pub ins_count: Vec<usize>,
    pub audio_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("assigned word times decrease at reference word {word_ordinal}")]
pub struct InconsistentTimestampsError {
    pub word_ordinal: usize,
}

/// Merges per-chunk alignments into one timed transcript. Competing claims
/// on a reference word go to the alignment with the higher score, ties to
/// the earlier chunk. Only MATCH ops assign times; claimed words without a
/// time stay ALIGNED but untimed, unclaimed words are UNALIGNED. Inserted
/// hypothesis words are counted against the next claimed reference word so
/// per-segment alignment error rates can be computed downstream.
pub fn stitch(
    alignments: &[ChunkAlignment],
    ref_seq: &TokenSeq,
    hyp: &TimedHypothesis,
) -> Result<TimedTranscript, InconsistentTimestampsError> {
    let marked = mark_silences(hyp, SIL_GAP_THRESH_S);
    let word_tokens = ref_seq.word_indices();
    let n_words = word_tokens.len();
    let mut tok_ord = vec![usize::MAX; ref_seq.len()];
    for (ord, &t) in word_tokens.iter().enumerate() {
        tok_ord[t] = ord;
    }

    let mut order: Vec<usize> = (0..alignments.len()).collect();
    order.sort_by_key(|&k| alignments[k].chunk_match.hyp_chunk);

    // (score, chunk rank, op kind, hyp symbol) per claimed word.
    let mut winner: Vec<Option<(i64, usize, AlignKind, Option<usize>)>> = vec![None; n_words];
    for (rank, &k) in order.iter().enumerate() {
        let a = &alignments[k];
        for op in &a.ops {
            if matches!(op.kind, AlignKind::Match | AlignKind::Sub | AlignKind::Del) {
                let ord = tok_ord[op.ref_index.expect("ref-consuming op")];
                debug_assert_ne!(ord, usize::MAX, "word op on a non-word token");
                if winner[ord].map_or(true, |(s, _, _, _)| a.score > s) {
                    winner[ord] = Some((a.score, rank, op.kind, op.hyp_index));
                }
            }
        }
    }

    let mut ins_count = vec![0usize; n_words];
    for (rank, &k) in order.iter().enumerate() {
        let mut pending = 0usize;
        let mut last_anchor: Option<usize> = None;
        let mut credit = |ord: usize, pending: &mut usize| {
            if winner[ord].map_or(false, |(_, r, _, _)| r == rank) {
                ins_count[ord] += *pending;
            }
            *pending = 0;
        };
        for op in &alignments[k].ops {
            match op.kind {
                AlignKind::Ins => pending += 1,
                AlignKind::Match | AlignKind::Sub | AlignKind::Del => {
                    let ord = tok_ord[op.ref_index.unwrap()];
                    credit(ord, &mut pending);
                    last_anchor = Some(ord);
                }
                _ => {}
            }
        }
        if pending > 0 {
            if let Some(ord) = last_anchor {
                credit(ord, &mut pending);
            }
        }
    }

    let mut word_times = vec![None; n_words];
    let mut align_label = vec![AlignLabel::Unaligned; n_words];
    let mut word_ops = vec![None; n_words];
    for ord in 0..n_words {
        if let Some((_, _, kind, hyp_index)) = winner[ord] {
            align_label[ord] = AlignLabel::Aligned;
            word_ops[ord] = Some(kind);
            if kind == AlignKind::Match {
                let w = marked.syms[hyp_index.unwrap()].word.unwrap();
                word_times[ord] = Some((hyp.words[w].begin_s, hyp.words[w].end_s));
            }
        }
    }

    let mut prev: Option<(f64, f64)> = None;
    for (ord, t) in word_times.iter().enumerate() {
        if let Some((b, e)) = *t {
            if let Some((pb, pe)) = prev {
                if b < pb || e < pe {
                    return Err(InconsistentTimestampsError { word_ordinal: ord });
                }
            }
            prev = Some((b, e));
        }
    }

    let mut pause_after = vec![0.0; ref_seq.len()];
    let timed: Vec<(usize, f64, f64)> = (0..n_words)
        .filter_map(|ord| word_times[ord].map(|(b, e)| (word_tokens[ord], b, e)))
        .collect();
    for (w, &(_, _, end)) in timed.iter().enumerate() {
        match timed.get(w + 1) {
            Some(&(next_tok, next_begin, _)) => {
                pause_after[next_tok - 1] = (next_begin - end).max(0.0);
            }
            None => {
                pause_after[ref_seq.len() - 1] = (hyp.audio_duration_s - end).max(0.0);
            }
        }
    }

    Ok(TimedTranscript {
        ref_seq: ref_seq.clone(),
        word_tokens,
        word_times,
        pause_after,
        align_label,
        word_ops,
        ins_count,
        audio_duration_s: hyp.audio_duration_s,
    })
}

impl TimedTranscript {
    /// CTM-style inspection dump, one line per reference word: text, begin,
    /// duration, label. Untimed words print dashes for the numbers.
    pub fn to_ctm(&self) -> String {
        let mut out = String::new();
        for (ord, &t) in self.word_tokens.iter().enumerate() {
            let text = &self.ref_seq.tokens[t].text;
            let label = match self.align_label[ord] {
                AlignLabel::Aligned => "ALIGNED",
                AlignLabel::Unaligned => "UNALIGNED",
            };
            match self.word_times[ord] {
                Some((b, e)) => {
                    out.push_str(&format!("{text} {b:.3} {:.3} {label}\n", e - b));
                }
                None => out.push_str(&format!("{text} - - {label}\n")),
            }
        }
        out
    }
}

/// Alignment word error rate in percent over `ref_len_words` reference
/// words: substitutions, insertions and deletions count, skips do not.
pub fn alignment_wer(ops: &[AlignOp], ref_len_words: usize) -> f64 {
    assert!(ref_len_words > 0, "reference must contain words");
    let errors = ops
        .iter()
        .filter(|op| matches!(op.kind, AlignKind::Sub | AlignKind::Ins | AlignKind::Del))
        .count();
    100.0 * errors as f64 / ref_len_words as f64
}
