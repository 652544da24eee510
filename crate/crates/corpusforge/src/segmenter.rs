//! Cuts a timed transcript into candidate training segments.
//!
//! Split points come from long silences, punctuation that co-occurs with a
//! pause, and the edges of aligned regions. The pieces are then trimmed and
//! filtered: leading punctuation is dropped, at most one sentence-final
//! punctuation token is kept, and segments that are too long, too short,
//! too error-ridden or entirely unaligned are discarded. Surviving segments
//! get a little boundary silence back, at most 0.15 s per side and never
//! more than half of a gap that a neighboring segment could also claim.

use serde::{Deserialize, Serialize};

use crate::sw_align::{AlignKind, AlignLabel, TimedTranscript};
use crate::textnorm::TokenSeq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    pub sil_thresh_s: f64,
    pub punct_pause_s: f64,
    pub max_len_s: f64,
    pub min_len_s: f64,
    pub boundary_sil_s: f64,
    pub max_alignment_wer: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        SegmenterConfig {
            sil_thresh_s: 1.0,
            punct_pause_s: 0.2,
            max_len_s: 20.0,
            min_len_s: 0.5,
            boundary_sil_s: 0.15,
            max_alignment_wer: 75.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCause {
    LongSilence,
    PunctPause,
    AlignBoundary,
}

/// A cut after `token_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub token_index: usize,
    pub cause: SplitCause,
}

/// Why a candidate region between split points was not emitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoWords,
    Unaligned,
    Untimed,
    HighAlignmentWer,
    TooLong,
    TooShort,
}

/// Drop tallies, one counter per rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDrops {
    pub no_words: usize,
    pub unaligned: usize,
    pub untimed: usize,
    pub high_alignment_wer: usize,
    pub too_long: usize,
    pub too_short: usize,
}

impl SegmentDrops {
    fn record(&mut self, reason: DropReason) {
        match reason {
            DropReason::NoWords => self.no_words += 1,
            DropReason::Unaligned => self.unaligned += 1,
            DropReason::Untimed => self.untimed += 1,
            DropReason::HighAlignmentWer => self.high_alignment_wer += 1,
            DropReason::TooLong => self.too_long += 1,
            DropReason::TooShort => self.too_short += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.no_words
            + self.unaligned
            + self.untimed
            + self.high_alignment_wer
            + self.too_long
            + self.too_short
    }
}

impl std::ops::AddAssign for SegmentDrops {
    fn add_assign(&mut self, o: SegmentDrops) {
        self.no_words += o.no_words;
        self.unaligned += o.unaligned;
        self.untimed += o.untimed;
        self.high_alignment_wer += o.high_alignment_wer;
        self.too_long += o.too_long;
        self.too_short += o.too_short;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSegment {
    pub begin_s: f64,
    pub end_s: f64,
    pub token_range: (usize, usize),
    pub tokens: TokenSeq,
    pub alignment_wer: f64,
    pub boundary_silence: (f64, f64),
}

impl CandidateSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.begin_s
    }
}

/// Collects split points: any token whose following pause exceeds
/// `sil_thresh_s`, any punctuation token whose pause exceeds
/// `punct_pause_s`, and a forced cut wherever the aligned/unaligned label
/// changes between consecutive words (placed just before the later word, so
/// trailing punctuation stays with the earlier one). Returns an empty list
/// when nothing is aligned; the caller drops such documents anyway.
pub fn find_split_points(
    tt: &TimedTranscript,
    sil_thresh_s: f64,
    punct_pause_s: f64,
) -> Vec<SplitPoint> {
    if !tt.align_label.contains(&AlignLabel::Aligned) {
        return Vec::new();
    }
    let mut points: Vec<SplitPoint> = Vec::new();
    for (t, tok) in tt.ref_seq.tokens.iter().enumerate() {
        if tt.pause_after[t] > sil_thresh_s {
            points.push(SplitPoint { token_index: t, cause: SplitCause::LongSilence });
        } else if !tok.is_word() && tt.pause_after[t] > punct_pause_s {
            points.push(SplitPoint { token_index: t, cause: SplitCause::PunctPause });
        }
    }
    for w in 1..tt.word_tokens.len() {
        if tt.align_label[w] != tt.align_label[w - 1] {
            points.push(SplitPoint {
                token_index: tt.word_tokens[w] - 1,
                cause: SplitCause::AlignBoundary,
            });
        }
    }
    points.sort_by_key(|p| p.token_index);
    points.dedup_by_key(|p| p.token_index);
    points
}

struct OrdinalView {
    /// End time of the nearest timed word at or before each word ordinal.
    prev_timed_end: Vec<Option<f64>>,
    /// Begin time of the nearest timed word at or after each word ordinal.
    next_timed_begin: Vec<Option<f64>>,
}

fn ordinal_view(tt: &TimedTranscript) -> OrdinalView {
    let n = tt.word_tokens.len();
    let mut prev_timed_end = vec![None; n];
    let mut running = None;
    for w in 0..n {
        prev_timed_end[w] = running;
        if let Some((_, e)) = tt.word_times[w] {
            running = Some(e);
            prev_timed_end[w] = running;
        }
    }
    let mut next_timed_begin = vec![None; n];
    let mut running = None;
    for w in (0..n).rev() {
        next_timed_begin[w] = running;
        if let Some((b, _)) = tt.word_times[w] {
            running = Some(b);
            next_timed_begin[w] = running;
        }
    }
    OrdinalView { prev_timed_end, next_timed_begin }
}

/// Materializes the segments between consecutive split points and applies
/// the drop rules. `splits` must be sorted by token index.
pub fn cut_segments(
    tt: &TimedTranscript,
    splits: &[SplitPoint],
    cfg: &SegmenterConfig,
) -> Vec<CandidateSegment> {
    cut_segments_counted(tt, splits, cfg).0
}

/// Like [`cut_segments`] but also tallies why regions were dropped.
pub fn cut_segments_counted(
    tt: &TimedTranscript,
    splits: &[SplitPoint],
    cfg: &SegmenterConfig,
) -> (Vec<CandidateSegment>, SegmentDrops) {
    let mut tok_ord = vec![usize::MAX; tt.ref_seq.len()];
    for (ord, &t) in tt.word_tokens.iter().enumerate() {
        tok_ord[t] = ord;
    }
    let view = ordinal_view(tt);

    let mut out = Vec::new();
    let mut drops = SegmentDrops::default();
    let mut start = 0usize;
    let bounds = splits
        .iter()
        .map(|p| p.token_index + 1)
        .chain(std::iter::once(tt.ref_seq.len()));
    for end in bounds {
        let raw = (start, end);
        start = end;
        match build_segment(tt, &tok_ord, &view, raw, cfg) {
            Ok(seg) => out.push(seg),
            Err(reason) => drops.record(reason),
        }
    }
    debug_assert!(out.windows(2).all(|w| w[0].end_s <= w[1].begin_s), "segments must be disjoint");
    (out, drops)
}

fn build_segment(
    tt: &TimedTranscript,
    tok_ord: &[usize],
    view: &OrdinalView,
    raw: (usize, usize),
    cfg: &SegmenterConfig,
) -> Result<CandidateSegment, DropReason> {
    let tokens = &tt.ref_seq.tokens;
    // Trim to start and end on a timed word; keep at most one punctuation
    // token after the last word. Untimed edge words must go: the window is
    // built from timed word boundaries, so an untimed word at the edge would
    // put its audio outside the very window that claims its text. Untimed
    // words between timed ones stay, since their audio is boxed in.
    let timed_word = |t: usize| {
        tokens[t].is_word() && tok_ord[t] != usize::MAX && tt.word_times[tok_ord[t]].is_some()
    };
    let mut a = raw.0;
    while a < raw.1 && !timed_word(a) {
        a += 1;
    }
    let mut last_word = None;
    for t in (a..raw.1).rev() {
        if timed_word(t) {
            last_word = Some(t);
            break;
        }
    }
    let last_word = match last_word {
        Some(t) => t,
        None if (raw.0..raw.1).any(|t| tokens[t].is_word()) => return Err(DropReason::Untimed),
        None => return Err(DropReason::NoWords),
    };
    let b = if last_word + 1 < raw.1 && !tokens[last_word + 1].is_word() {
        last_word + 2
    } else {
        last_word + 1
    };

    let ords: Vec<usize> = (a..b).filter(|&t| tok_ord[t] != usize::MAX).map(|t| tok_ord[t]).collect();
    if ords.iter().all(|&w| tt.align_label[w] == AlignLabel::Unaligned) {
        return Err(DropReason::Unaligned);
    }

    let timed: Vec<(f64, f64)> = ords.iter().filter_map(|&w| tt.word_times[w]).collect();
    let (core_begin, core_end) = match (timed.first(), timed.last()) {
        (Some(&(b0, _)), Some(&(_, e1))) => (b0, e1),
        _ => return Err(DropReason::Untimed),
    };

    let errors: usize = ords
        .iter()
        .map(|&w| {
            let e = match tt.word_ops[w] {
                Some(AlignKind::Sub) | Some(AlignKind::Del) => 1,
                _ => 0,
            };
            e + tt.ins_count[w]
        })
        .sum();
    let alignment_wer = 100.0 * errors as f64 / ords.len() as f64;
    if alignment_wer >= cfg.max_alignment_wer {
        return Err(DropReason::HighAlignmentWer);
    }

    // Boundary silence: at most `boundary_sil_s`, and at most half of an
    // interior gap since the neighbor may claim the other half. An untimed
    // neighbor word could start speaking anywhere inside the gap, so next to
    // one the only safe padding is none at all.
    let first_timed = *ords.iter().find(|&&w| tt.word_times[w].is_some()).unwrap();
    let last_timed = *ords.iter().rev().find(|&&w| tt.word_times[w].is_some()).unwrap();
    let leading = if first_timed > 0 && tt.word_times[first_timed - 1].is_none() {
        0.0
    } else if first_timed == 0 {
        cfg.boundary_sil_s.min(core_begin).max(0.0)
    } else {
        match view.prev_timed_end[first_timed - 1] {
            None => cfg.boundary_sil_s.min(core_begin).max(0.0),
            Some(prev_end) => cfg.boundary_sil_s.min((core_begin - prev_end).max(0.0) / 2.0),
        }
    };
    let trailing = if last_timed + 1 < tt.word_times.len() && tt.word_times[last_timed + 1].is_none()
    {
        0.0
    } else {
        match view.next_timed_begin.get(last_timed + 1) {
            None | Some(None) => cfg.boundary_sil_s.min((tt.audio_duration_s - core_end).max(0.0)),
            Some(Some(next_begin)) => {
                cfg.boundary_sil_s.min((next_begin - core_end).max(0.0) / 2.0)
            }
        }
    };
    let begin_s = core_begin - leading;
    let end_s = core_end + trailing;

    let dur = end_s - begin_s;
    if dur >= cfg.max_len_s {
        return Err(DropReason::TooLong);
    }
    if dur < cfg.min_len_s {
        return Err(DropReason::TooShort);
    }

    Ok(CandidateSegment {
        begin_s,
        end_s,
        token_range: (a, b),
        tokens: tt.ref_seq.slice(a, b),
        alignment_wer,
        boundary_silence: (leading, trailing),
    })
}

/// Split and cut in one step.
pub fn segment_document(tt: &TimedTranscript, cfg: &SegmenterConfig) -> Vec<CandidateSegment> {
    segment_document_counted(tt, cfg).0
}

/// Split and cut, reporting drop tallies alongside the segments.
pub fn segment_document_counted(
    tt: &TimedTranscript,
    cfg: &SegmenterConfig,
) -> (Vec<CandidateSegment>, SegmentDrops) {
    let splits = find_split_points(tt, cfg.sil_thresh_s, cfg.punct_pause_s);
    if splits.is_empty() && !tt.align_label.contains(&AlignLabel::Aligned) {
        return (Vec::new(), SegmentDrops::default());
    }
    cut_segments_counted(tt, &splits, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk_match::{Chunk, ChunkMatch, ChunkSide, TimedHypothesis, TimedWord};
    use crate::sw_align::{align_chunk_pair, mark_silences, stitch, Scoring, SIL_GAP_THRESH_S};
    use crate::textnorm::normalize_text;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Identity hypothesis for a normalized reference: every word spoken in
    /// order, with caller-chosen pauses after each word.
    fn aligned_tt(text: &str, pauses: &[f64], word_dur: f64) -> TimedTranscript {
        let seq = normalize_text(text);
        let words: Vec<&str> = seq.tokens.iter().filter(|t| t.is_word()).map(|t| t.text.as_str()).collect();
        assert_eq!(words.len(), pauses.len());
        let mut t = 0.0;
        let mut timed = Vec::new();
        for (w, pause) in words.iter().zip(pauses) {
            timed.push(TimedWord { text: w.to_string(), begin_s: t, end_s: t + word_dur });
            t += word_dur + pause;
        }
        let hyp = TimedHypothesis { words: timed, audio_duration_s: t + 0.5 };
        let marked = mark_silences(&hyp, SIL_GAP_THRESH_S);
        let hc = Chunk {
            id: 0,
            side: ChunkSide::Hyp,
            token_range: (0, hyp.words.len()),
            time_range: Some((0.0, hyp.audio_duration_s)),
        };
        let rc = Chunk { id: 0, side: ChunkSide::Ref, token_range: (0, seq.len()), time_range: None };
        let cm = ChunkMatch { hyp_chunk: 0, ref_chunk: 0, similarity: 1.0 };
        let al = align_chunk_pair(&marked, &seq, &hc, &rc, &cm, Scoring::default());
        stitch(&[al], &seq, &hyp).unwrap()
    }

    #[test]
    fn long_silence_splits_between_words() {
        let tt = aligned_tt("AB CD EF GH", &[0.1, 1.2, 0.1, 0.0], 0.3);
        let splits = find_split_points(&tt, 1.0, 0.2);
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].cause, SplitCause::LongSilence);
        assert_eq!(splits[0].token_index, tt.word_tokens[1]);
    }

    #[test]
    fn punctuated_pause_splits_and_quiet_comma_does_not() {
        let tt = aligned_tt("AB CD. EF GH", &[0.1, 0.3, 0.1, 0.0], 0.3);
        let splits = find_split_points(&tt, 1.0, 0.2);
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].cause, SplitCause::PunctPause);
        // The pause is carried by the period token, right after CD.
        assert_eq!(splits[0].token_index, tt.word_tokens[1] + 1);

        let quiet = aligned_tt("AB CD, EF GH", &[0.1, 0.1, 0.1, 0.0], 0.3);
        assert!(find_split_points(&quiet, 1.0, 0.2).is_empty());
    }

    #[test]
    fn label_changes_force_a_split() {
        let mut tt = aligned_tt("AB CD EF GH", &[0.0, 0.0, 0.0, 0.0], 0.3);
        tt.align_label[2] = AlignLabel::Unaligned;
        tt.align_label[3] = AlignLabel::Unaligned;
        tt.word_times[2] = None;
        tt.word_times[3] = None;
        tt.word_ops[2] = None;
        tt.word_ops[3] = None;
        let splits = find_split_points(&tt, 1.0, 0.2);
        assert!(splits.iter().any(|p| p.cause == SplitCause::AlignBoundary
            && p.token_index == tt.word_tokens[2] - 1));
    }

    #[test]
    fn segments_between_splits_with_boundary_silence() {
        let tt = aligned_tt("AB CD EF GH", &[0.1, 1.2, 0.1, 0.0], 0.3);
        let segs = segment_document(&tt, &SegmenterConfig::default());
        assert_eq!(segs.len(), 2);
        // Interior gap of 1.2 s: each side may take up to half, capped at 0.15.
        assert!((segs[0].boundary_silence.1 - 0.15).abs() < 1e-9);
        assert!((segs[1].boundary_silence.0 - 0.15).abs() < 1e-9);
        // Doc-leading silence is 0 here, begin stays at the first word.
        assert_eq!(segs[0].begin_s, 0.0);
        assert!(segs[0].end_s <= segs[1].begin_s);
    }

    #[test]
    fn narrow_shared_gaps_are_halved() {
        // 0.2 s gap: if both neighbors took 0.15 they would overlap.
        let mut cfg = SegmenterConfig::default();
        cfg.sil_thresh_s = 0.15;
        let tt = aligned_tt("AB CD", &[0.2, 0.0], 1.0);
        let segs = segment_document(&tt, &cfg);
        assert_eq!(segs.len(), 2);
        assert!((segs[0].boundary_silence.1 - 0.1).abs() < 1e-9);
        assert!((segs[1].boundary_silence.0 - 0.1).abs() < 1e-9);
        assert!(segs[0].end_s <= segs[1].begin_s);
    }

    #[test]
    fn overlong_and_tiny_segments_are_dropped() {
        // 25 s of speech with no internal pause: one overlong segment, dropped.
        let words = vec!["WORD"; 25];
        let tt = aligned_tt(&words.join(" "), &vec![0.0; 25], 1.0);
        assert!(segment_document(&tt, &SegmenterConfig::default()).is_empty());

        // Two words totalling 0.2 s: below the minimum length.
        let tt = aligned_tt("AB CD", &[0.0, 0.0], 0.1);
        assert!(segment_document(&tt, &SegmenterConfig::default()).is_empty());
    }

    #[test]
    fn high_alignment_wer_segments_are_dropped() {
        let mut tt = aligned_tt("AB CD EF GH", &[0.0, 0.0, 0.0, 0.0], 0.5);
        // Three of four words substituted: 75%, at the drop threshold. The
        // times stay so the words stay inside the segment and get counted.
        for w in 1..4 {
            tt.word_ops[w] = Some(AlignKind::Sub);
        }
        assert!(segment_document(&tt, &SegmenterConfig::default()).is_empty());

        // One substitution in four words: 25%, kept.
        let mut tt = aligned_tt("AB CD EF GH", &[0.0, 0.0, 0.0, 0.0], 0.5);
        tt.word_ops[2] = Some(AlignKind::Sub);
        tt.word_times[2] = None;
        let segs = segment_document(&tt, &SegmenterConfig::default());
        assert_eq!(segs.len(), 1);
        assert!((segs[0].alignment_wer - 25.0).abs() < 1e-9);
    }

    #[test]
    fn unaligned_only_segments_are_dropped() {
        let mut tt = aligned_tt("AB CD EF GH", &[0.0, 1.5, 0.0, 0.0], 0.5);
        for w in 2..4 {
            tt.align_label[w] = AlignLabel::Unaligned;
            tt.word_times[w] = None;
            tt.word_ops[w] = None;
        }
        let segs = segment_document(&tt, &SegmenterConfig::default());
        assert_eq!(segs.len(), 1, "only the aligned half survives");
        assert_eq!(segs[0].tokens.render(), "AB CD");
    }

    #[test]
    fn untimed_edge_words_are_trimmed_from_the_range() {
        // GH lost its time (an unmatched substitution at the tail): its
        // audio could be anywhere past EF, so the segment must neither
        // claim the token nor pad into the unknown.
        let mut tt = aligned_tt("AB CD EF GH", &[0.0, 0.0, 0.0, 0.0], 0.5);
        tt.word_ops[3] = Some(AlignKind::Sub);
        tt.word_times[3] = None;
        let segs = segment_document(&tt, &SegmenterConfig::default());
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].tokens.render(), "AB CD EF");
        assert!((segs[0].end_s - 1.5).abs() < 1e-9, "no trailing pad next to an untimed word");
    }

    #[test]
    fn edges_are_trimmed_to_words_plus_one_final_punct() {
        let tt = aligned_tt("AB CD. EF GH!", &[0.0, 0.5, 0.0, 0.0], 0.5);
        let segs = segment_document(&tt, &SegmenterConfig::default());
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].tokens.render(), "AB CD <PERIOD>");
        // The second segment must not start with the period.
        assert_eq!(segs[1].tokens.render(), "EF GH <EXCLAMATIONMARK>");
        for s in &segs {
            assert!(s.tokens.tokens.first().unwrap().is_word());
        }
    }

    #[test]
    fn raising_the_silence_threshold_never_adds_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let n = rng.gen_range(2..30);
            let text: Vec<String> = (0..n)
                .map(|i| {
                    let mut w = format!("W{}", (b'A' + (i % 26) as u8) as char);
                    if rng.gen_bool(0.25) {
                        w.push_str(if rng.gen_bool(0.5) { "." } else { "," });
                    }
                    w
                })
                .collect();
            let pauses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let tt = aligned_tt(&text.join(" "), &pauses, 0.3);
            let low = find_split_points(&tt, 0.8, 0.2).len();
            let high = find_split_points(&tt, 1.2, 0.2).len();
            assert!(high <= low, "raising the threshold added splits");
        }
    }

    #[test]
    fn emitted_segments_are_sorted_disjoint_and_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let cfg = SegmenterConfig::default();
        for _ in 0..40 {
            let n = rng.gen_range(2..60);
            let text: Vec<String> = (0..n)
                .map(|i| {
                    let mut w = format!("V{}", (b'A' + (i % 26) as u8) as char);
                    if rng.gen_bool(0.2) {
                        w.push('.');
                    }
                    w
                })
                .collect();
            let pauses: Vec<f64> =
                (0..n).map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.3..3.0) } else { 0.0 }).collect();
            let tt = aligned_tt(&text.join(" "), &pauses, rng.gen_range(0.2..0.6));
            let segs = segment_document(&tt, &cfg);
            for pair in segs.windows(2) {
                assert!(pair[0].end_s <= pair[1].begin_s);
            }
            for s in &segs {
                assert!(s.duration_s() < cfg.max_len_s);
                assert!(s.duration_s() >= cfg.min_len_s);
                assert!(s.boundary_silence.0 <= cfg.boundary_sil_s + 1e-12);
                assert!(s.boundary_silence.1 <= cfg.boundary_sil_s + 1e-12);
                assert!(s.tokens.tokens.first().unwrap().is_word());
            }
        }
    }
}
