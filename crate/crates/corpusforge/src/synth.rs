//! Deterministic synthetic corpora with known ground truth.
//!
//! Real audio is out of reach at desk scale, so a generator fabricates the
//! whole chain instead: a spoken word sequence with per-word times, a
//! transcript a fallible transcriber might have produced from it (errors
//! injected at recorded positions, the answer key), gold utterance spans
//! for the evaluator, and an [`AcousticScorer`] that answers span queries
//! straight from the ground-truth timing. Everything is a pure function of
//! [`SynthSpec`]'s seed; per-document RNG streams keep documents independent
//! of each other and of iteration order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::align_graph::FillerSet;
use crate::chunk_match::{TimedHypothesis, TimedWord};
use crate::metadata::Source;
use crate::validator::AcousticScorer;

/// How much worse a wrong-word query scores than the true word, in nats.
/// This has to beat the most expensive detour the validation graph can
/// buy (leak 6 + garbage 4 + return 1 ≈ 11 nats by default), otherwise the
/// decoder would gloss over transcript errors by eating mismatched words
/// on the forced path and error detection would go blind.
pub const MISMATCH_MARGIN_NATS: f64 = 16.0;

pub const FRAME_RATE: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    /// A content word the transcriber missed entirely.
    pub deletion: f64,
    /// A content word written as a different (corrupted) word.
    pub typo: f64,
    /// A spoken filler phrase left out of the transcript.
    pub filler_drop: f64,
    /// A stutter written once instead of verbatim.
    pub disfluency_drop: f64,
}

impl ErrorRates {
    pub const NONE: ErrorRates =
        ErrorRates { deletion: 0.0, typo: 0.0, filler_drop: 0.0, disfluency_drop: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PauseModel {
    pub inter_word_mean_s: f64,
    pub sentence_pause_mean_s: f64,
}

impl Default for PauseModel {
    fn default() -> Self {
        PauseModel { inter_word_mean_s: 0.06, sentence_pause_mean_s: 0.7 }
    }
}

fn default_filler_rate() -> f64 {
    0.05
}

fn default_disfluency_rate() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_docs: usize,
    pub words_per_doc: usize,
    pub vocab_size: usize,
    pub error_rates: ErrorRates,
    pub pause_model: PauseModel,
    /// Chance of a filler phrase being spoken before a content word.
    #[serde(default = "default_filler_rate")]
    pub filler_rate: f64,
    /// Chance of a content word being stuttered.
    #[serde(default = "default_disfluency_rate")]
    pub disfluency_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            n_docs: 20,
            words_per_doc: 200,
            vocab_size: 50,
            error_rates: ErrorRates::NONE,
            pause_model: PauseModel::default(),
            filler_rate: default_filler_rate(),
            disfluency_rate: default_disfluency_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid synth spec: {0}")]
pub struct SpecError(String);

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        let probs = [
            ("deletion", self.error_rates.deletion),
            ("typo", self.error_rates.typo),
            ("filler_drop", self.error_rates.filler_drop),
            ("disfluency_drop", self.error_rates.disfluency_drop),
            ("filler_rate", self.filler_rate),
            ("disfluency_rate", self.disfluency_rate),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SpecError(format!("{name} = {p} is not a probability")));
            }
        }
        if self.n_docs == 0 || self.words_per_doc == 0 || self.vocab_size == 0 {
            return Err(SpecError("counts must be positive".into()));
        }
        if self.pause_model.inter_word_mean_s < 0.0 || self.pause_model.sentence_pause_mean_s < 0.0
        {
            return Err(SpecError("pause means must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InjectionKind {
    Deletion,
    Typo { written: String },
    FillerDrop,
    DisfluencyDrop,
}

/// One transcriber error: which spoken word it hit and when that word was
/// on the air (for mapping errors onto segments later).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    #[serde(flatten)]
    pub kind: InjectionKind,
    pub spoken_index: usize,
    pub begin_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanSegment {
    pub begin_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDoc {
    pub aid: String,
    pub source: Source,
    pub true_spoken: Vec<TimedWord>,
    pub transcript_raw: String,
    pub human_segments: Vec<HumanSegment>,
    pub injections: Vec<Injection>,
    pub audio_duration_s: f64,
}

impl SynthDoc {
    /// The spoken words as the first-pass recognizer would deliver them:
    /// this generator's "hypothesis" is simply the truth.
    pub fn hypothesis(&self) -> TimedHypothesis {
        TimedHypothesis {
            words: self.true_spoken.clone(),
            audio_duration_s: self.audio_duration_s,
        }
    }
}

/// Spoken-word duration without audio: 0.08 s per character, clamped to
/// [0.15, 1.2] s.
pub fn word_duration_s(text: &str) -> f64 {
    (0.08 * text.chars().count() as f64).clamp(0.15, 1.2)
}

/// Deterministic content vocabulary: three-letter words counted in base
/// 26, skipping anything that doubles as a filler word.
pub fn vocab(size: usize) -> Vec<String> {
    assert!(size <= 17_000, "three letters only go so far");
    let reserved = FillerSet::default().unigrams();
    let mut words = Vec::with_capacity(size);
    let mut i = 0u32;
    while words.len() < size {
        let w: String = [i / 676 % 26, i / 26 % 26, i % 26]
            .iter()
            .map(|&d| (b'A' + d as u8) as char)
            .collect();
        i += 1;
        if !reserved.contains(&w) {
            words.push(w);
        }
    }
    words
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Content,
    Filler,
    Repeat,
}

struct SpokenItem {
    text: String,
    role: Role,
    /// Filler phrases and stutters drop as a unit; each unit has one id.
    group: usize,
    sentence_end: bool,
}

fn draw_pause(rng: &mut ChaCha8Rng, mean_s: f64) -> f64 {
    if mean_s <= 0.0 {
        return 0.0;
    }
    Exp::new(1.0 / mean_s).expect("positive rate").sample(rng)
}

/// Replaces one letter, yielding a different word of the same length.
fn corrupt(rng: &mut ChaCha8Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let at = rng.gen_range(0..chars.len());
    let old = chars[at];
    loop {
        let c = (b'A' + rng.gen_range(0..26u8)) as char;
        if c != old {
            chars[at] = c;
            break;
        }
    }
    chars.into_iter().collect()
}

pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthDoc>, SpecError> {
    spec.validate()?;
    let words = vocab(spec.vocab_size);
    let fillers = FillerSet::default();
    let docs = (0..spec.n_docs)
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(d as u64 + 1);
            generate_doc(spec, d, &words, &fillers, &mut rng)
        })
        .collect();
    Ok(docs)
}

fn generate_doc(
    spec: &SynthSpec,
    doc_index: usize,
    words: &[String],
    fillers: &FillerSet,
    rng: &mut ChaCha8Rng,
) -> SynthDoc {
    // What was said, in order.
    let mut spoken: Vec<SpokenItem> = Vec::new();
    let mut group = 0;
    let mut sentence_len = rng.gen_range(6..=12);
    let mut in_sentence = 0;
    let mut content = 0;
    while content < spec.words_per_doc {
        if rng.gen_bool(spec.filler_rate) {
            let phrase = &fillers.phrases[rng.gen_range(0..fillers.phrases.len())];
            for w in phrase {
                spoken.push(SpokenItem {
                    text: w.clone(),
                    role: Role::Filler,
                    group,
                    sentence_end: false,
                });
            }
            group += 1;
        }
        let w = &words[rng.gen_range(0..words.len())];
        let stutter_group = group;
        spoken.push(SpokenItem {
            text: w.clone(),
            role: Role::Content,
            group,
            sentence_end: false,
        });
        group += 1;
        if rng.gen_bool(spec.disfluency_rate) {
            for _ in 0..rng.gen_range(1..=2) {
                spoken.push(SpokenItem {
                    text: w.clone(),
                    role: Role::Repeat,
                    group: stutter_group,
                    sentence_end: false,
                });
            }
        }
        content += 1;
        in_sentence += 1;
        if in_sentence >= sentence_len {
            spoken.last_mut().unwrap().sentence_end = true;
            in_sentence = 0;
            sentence_len = rng.gen_range(6..=12);
        }
    }
    spoken.last_mut().unwrap().sentence_end = true;

    // Timing: word durations from length, pauses from the exponential
    // model, a longer draw after sentence ends.
    let mut true_spoken = Vec::with_capacity(spoken.len());
    let mut human_segments = Vec::new();
    let mut t = 0.0;
    let mut sentence_begin = 0.0;
    for item in &spoken {
        let begin = t;
        let end = begin + word_duration_s(&item.text);
        true_spoken.push(TimedWord { text: item.text.clone(), begin_s: begin, end_s: end });
        let mean = if item.sentence_end {
            spec.pause_model.sentence_pause_mean_s
        } else {
            spec.pause_model.inter_word_mean_s
        };
        t = end + draw_pause(rng, mean);
        if item.sentence_end {
            human_segments.push(HumanSegment { begin_s: sentence_begin, end_s: end });
            sentence_begin = t;
        }
    }
    let audio_duration_s = t;

    // Transcription: walk the spoken sequence and decide, unit by unit,
    // what the transcriber wrote down.
    let mut lexemes: Vec<String> = Vec::new();
    let mut injections: Vec<Injection> = Vec::new();
    let mut dropped_groups: std::collections::HashMap<usize, bool> =
        std::collections::HashMap::new();
    for (i, item) in spoken.iter().enumerate() {
        let tw = &true_spoken[i];
        let record = |kind: InjectionKind, injections: &mut Vec<Injection>| {
            injections.push(Injection {
                kind,
                spoken_index: i,
                begin_s: tw.begin_s,
                end_s: tw.end_s,
            });
        };
        let written = match item.role {
            Role::Filler => {
                let drop = *dropped_groups
                    .entry(item.group)
                    .or_insert_with(|| rng.gen_bool(spec.error_rates.filler_drop));
                if drop {
                    record(InjectionKind::FillerDrop, &mut injections);
                    None
                } else {
                    Some(item.text.clone())
                }
            }
            Role::Repeat => {
                let drop = *dropped_groups
                    .entry(item.group)
                    .or_insert_with(|| rng.gen_bool(spec.error_rates.disfluency_drop));
                if drop {
                    record(InjectionKind::DisfluencyDrop, &mut injections);
                    None
                } else {
                    Some(item.text.clone())
                }
            }
            Role::Content => {
                if rng.gen_bool(spec.error_rates.deletion) {
                    record(InjectionKind::Deletion, &mut injections);
                    None
                } else if rng.gen_bool(spec.error_rates.typo) {
                    let written = corrupt(rng, &item.text);
                    record(InjectionKind::Typo { written: written.clone() }, &mut injections);
                    Some(written)
                } else {
                    Some(item.text.clone())
                }
            }
        };
        if let Some(w) = written {
            lexemes.push(w);
        }
        if item.sentence_end {
            if let Some(last) = lexemes.last_mut() {
                if !last.ends_with('.') {
                    last.push('.');
                }
            }
        }
    }

    SynthDoc {
        aid: format!("SYN{doc_index:04}"),
        source: Source::ALL[doc_index % Source::ALL.len()],
        true_spoken,
        transcript_raw: lexemes.join(" "),
        human_segments,
        injections,
        audio_duration_s,
    }
}

fn fnv1a(chunks: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for chunk in chunks {
        for &b in *chunk {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Span oracle over one document's ground truth. Every frame belongs to
/// the region of exactly one spoken word: the word playing at that frame,
/// or the next word to start if the frame falls in a pause. A query
/// returns the span from the query frame to the region's end, scored near
/// zero when the queried word is the region's word and
/// [`MISMATCH_MARGIN_NATS`] worse otherwise, plus deterministic jitter.
pub struct SynthScorer {
    words: Vec<String>,
    word_end: Vec<u32>,
    region_end: Vec<u32>,
    total: u32,
    noise: f64,
    seed: u64,
}

pub fn make_scorer(doc: &SynthDoc, noise: f64, seed: u64) -> SynthScorer {
    let total = (doc.audio_duration_s * FRAME_RATE as f64).round() as u32;
    let n = doc.true_spoken.len();
    let mut words = Vec::with_capacity(n);
    let mut word_end = Vec::with_capacity(n);
    let mut region_end = Vec::with_capacity(n);
    for (i, w) in doc.true_spoken.iter().enumerate() {
        words.push(w.text.clone());
        word_end.push((w.end_s * FRAME_RATE as f64).round() as u32);
        region_end.push(match doc.true_spoken.get(i + 1) {
            Some(next) => (next.begin_s * FRAME_RATE as f64).round() as u32,
            None => total,
        });
    }
    SynthScorer { words, word_end, region_end, total, noise, seed }
}

impl SynthScorer {
    fn jitter(&self, word: &str, from_frame: u32) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let h = fnv1a(&[&self.seed.to_le_bytes(), word.as_bytes(), &from_frame.to_le_bytes()]);
        let z: f64 = ChaCha8Rng::seed_from_u64(h).sample(StandardNormal);
        z * self.noise
    }
}

impl AcousticScorer for SynthScorer {
    fn best_span(&self, word: &str, from_frame: u32) -> Option<(u32, f64)> {
        if from_frame >= self.total {
            return None;
        }
        let i = self.word_end.partition_point(|&e| e <= from_frame);
        if i == self.words.len() {
            return None; // only trailing silence left
        }
        let base = if self.words[i] == word { 0.0 } else { -MISMATCH_MARGIN_NATS };
        Some((self.region_end[i], base - self.jitter(word, from_frame).abs()))
    }

    fn total_frames(&self) -> u32 {
        self.total
    }
}

/// A window onto another scorer, re-based to frame 0 and truncated at the
/// window's end, so segments can be validated against their own slice of
/// the document audio.
pub struct SegmentScorer<'a> {
    inner: &'a dyn AcousticScorer,
    offset: u32,
    len: u32,
}

impl<'a> SegmentScorer<'a> {
    pub fn new(inner: &'a dyn AcousticScorer, begin_s: f64, end_s: f64) -> SegmentScorer<'a> {
        let rate = inner.frame_rate() as f64;
        let offset = (begin_s * rate).round() as u32;
        let end = ((end_s * rate).round() as u32).min(inner.total_frames()).max(offset);
        SegmentScorer { inner, offset, len: end - offset }
    }
}

impl AcousticScorer for SegmentScorer<'_> {
    fn best_span(&self, word: &str, from_frame: u32) -> Option<(u32, f64)> {
        if from_frame >= self.len {
            return None;
        }
        let (end, score) = self.inner.best_span(word, self.offset + from_frame)?;
        let end = (end - self.offset).min(self.len);
        if end <= from_frame {
            return None;
        }
        Some((end, score))
    }

    fn total_frames(&self) -> u32 {
        self.len
    }

    fn frame_rate(&self) -> u32 {
        self.inner.frame_rate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align_graph::{build_graph, ArcKind, GarbageVocab, GraphWeights};
    use crate::textnorm::normalize_text;
    use crate::validator::{decode, DEFAULT_BEAM};

    fn quiet_spec() -> SynthSpec {
        SynthSpec {
            seed: 11,
            n_docs: 3,
            words_per_doc: 40,
            vocab_size: 30,
            filler_rate: 0.0,
            disfluency_rate: 0.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn durations_follow_the_length_table() {
        assert_eq!(word_duration_s("A"), 0.15);
        assert!((word_duration_s("ABCDEFGHIJ") - 0.8).abs() < 1e-12);
        assert_eq!(word_duration_s(&"A".repeat(20)), 1.2);
    }

    #[test]
    fn vocabulary_avoids_filler_words() {
        let v = vocab(2000);
        assert_eq!(v.len(), 2000);
        for w in ["AND", "BUT", "ERR"] {
            assert!(!v.contains(&w.to_string()), "{w} is reserved for filler loops");
        }
        assert_eq!(v[0], "AAA");
    }

    #[test]
    fn zero_rates_transcribe_the_spoken_words_verbatim() {
        let spec = SynthSpec { filler_rate: 0.1, disfluency_rate: 0.1, ..quiet_spec() };
        for doc in generate(&spec).unwrap() {
            assert!(doc.injections.is_empty());
            let toks = normalize_text(&doc.transcript_raw);
            let written: Vec<&str> =
                toks.tokens.iter().filter(|t| t.is_word()).map(|t| t.text.as_str()).collect();
            let spoken: Vec<&str> = doc.true_spoken.iter().map(|w| w.text.as_str()).collect();
            assert_eq!(written, spoken);
        }
    }

    #[test]
    fn total_deletion_of_a_one_word_doc_leaves_an_empty_transcript() {
        let spec = SynthSpec {
            words_per_doc: 1,
            n_docs: 1,
            error_rates: ErrorRates { deletion: 1.0, ..ErrorRates::NONE },
            ..quiet_spec()
        };
        let doc = &generate(&spec).unwrap()[0];
        assert_eq!(doc.transcript_raw, "");
        assert_eq!(doc.injections.len(), 1);
        assert!(matches!(doc.injections[0].kind, InjectionKind::Deletion));
        assert_eq!(doc.true_spoken.len(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            error_rates: ErrorRates {
                deletion: 0.05,
                typo: 0.02,
                filler_drop: 0.5,
                disfluency_drop: 0.5,
            },
            ..SynthSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn the_answer_key_explains_every_transcript_difference() {
        let spec = SynthSpec {
            seed: 3,
            n_docs: 6,
            words_per_doc: 120,
            error_rates: ErrorRates {
                deletion: 0.08,
                typo: 0.05,
                filler_drop: 0.4,
                disfluency_drop: 0.4,
            },
            ..SynthSpec::default()
        };
        for doc in generate(&spec).unwrap() {
            // Replay the answer key over the spoken sequence and demand the
            // transcript word for word.
            let mut expect: Vec<String> = Vec::new();
            for (i, w) in doc.true_spoken.iter().enumerate() {
                match doc.injections.iter().find(|inj| inj.spoken_index == i) {
                    None => expect.push(w.text.clone()),
                    Some(inj) => match &inj.kind {
                        InjectionKind::Typo { written } => expect.push(written.clone()),
                        _ => {}
                    },
                }
            }
            let toks = normalize_text(&doc.transcript_raw);
            let written: Vec<String> = toks
                .tokens
                .iter()
                .filter(|t| t.is_word())
                .map(|t| t.text.clone())
                .collect();
            assert_eq!(written, expect, "doc {}", doc.aid);
        }
    }

    #[test]
    fn injections_carry_the_true_word_times() {
        let spec = SynthSpec {
            error_rates: ErrorRates { deletion: 0.2, ..ErrorRates::NONE },
            ..quiet_spec()
        };
        for doc in generate(&spec).unwrap() {
            for inj in &doc.injections {
                let w = &doc.true_spoken[inj.spoken_index];
                assert_eq!((inj.begin_s, inj.end_s), (w.begin_s, w.end_s));
            }
        }
    }

    #[test]
    fn true_spans_tile_the_audio() {
        let doc = &generate(&SynthSpec::default()).unwrap()[0];
        let scorer = make_scorer(doc, 0.0, 0);
        let mut f = 0;
        for w in &doc.true_spoken {
            let (end, score) = scorer.best_span(&w.text, f).unwrap();
            assert_eq!(score, 0.0, "true word at its true frame scores clean");
            assert!(end > f);
            f = end;
        }
        assert_eq!(f, scorer.total_frames());
        assert!(scorer.best_span("AAA", f).is_none(), "nothing starts in trailing silence");
    }

    #[test]
    fn wrong_words_lose_by_the_margin() {
        let doc = &generate(&quiet_spec()).unwrap()[0];
        let scorer = make_scorer(doc, 0.0, 0);
        let truth = &doc.true_spoken[0];
        let (_, good) = scorer.best_span(&truth.text, 0).unwrap();
        let wrong = if truth.text == "AAA" { "AAB" } else { "AAA" };
        let (_, bad) = scorer.best_span(wrong, 0).unwrap();
        assert_eq!(good - bad, MISMATCH_MARGIN_NATS);
    }

    #[test]
    fn pause_frames_belong_to_the_next_word() {
        let doc = &generate(&SynthSpec::default()).unwrap()[0];
        let scorer = make_scorer(doc, 0.0, 0);
        // Find a pause of at least two frames between consecutive words.
        let gap = doc
            .true_spoken
            .windows(2)
            .find(|p| {
                (p[1].begin_s * 100.0).round() as u32 > (p[0].end_s * 100.0).round() as u32 + 1
            })
            .expect("the default pause model leaves gaps");
        let pause_frame = (gap[0].end_s * 100.0).round() as u32;
        let (_, score) = scorer.best_span(&gap[1].text, pause_frame).unwrap();
        assert_eq!(score, 0.0, "a query in the pause matches the upcoming word");
    }

    #[test]
    fn jitter_is_deterministic_and_scaled() {
        let doc = &generate(&quiet_spec()).unwrap()[0];
        let a = make_scorer(doc, 0.3, 42);
        let b = make_scorer(doc, 0.3, 42);
        let w = &doc.true_spoken[0].text;
        assert_eq!(a.best_span(w, 0), b.best_span(w, 0));
        let (_, jittered) = a.best_span(w, 0).unwrap();
        assert!(jittered <= 0.0 && jittered > -3.0);
        let c = make_scorer(doc, 0.3, 43);
        assert_ne!(a.best_span(w, 0), c.best_span(w, 0), "different seed, different jitter");
    }

    #[test]
    fn clean_documents_decode_without_leaks() {
        let spec = SynthSpec { n_docs: 2, words_per_doc: 30, ..SynthSpec::default() };
        for doc in generate(&spec).unwrap() {
            let seq = normalize_text(&doc.transcript_raw);
            let g = build_graph(
                &seq,
                4,
                &GraphWeights::default(),
                &GarbageVocab { words: vec!["AAA".into()] },
                &FillerSet::default(),
                10,
            )
            .unwrap();
            let scorer = make_scorer(&doc, 0.0, 5);
            let p = decode(&g, &scorer, DEFAULT_BEAM).unwrap();
            assert!(
                p.steps.iter().all(|s| g.arcs[s.arc].kind == ArcKind::Forced),
                "doc {} took a detour",
                doc.aid
            );
        }
    }

    #[test]
    fn segment_windows_rebase_and_truncate() {
        let doc = &generate(&quiet_spec()).unwrap()[0];
        let scorer = make_scorer(doc, 0.0, 0);
        // Window exactly around the second sentence.
        let seg = doc.human_segments[1];
        let view = SegmentScorer::new(&scorer, seg.begin_s, seg.end_s);
        let first = doc
            .true_spoken
            .iter()
            .position(|w| w.begin_s >= seg.begin_s)
            .expect("sentence has words");
        let mut f = 0;
        let mut i = first;
        while f < view.total_frames() {
            let w = &doc.true_spoken[i];
            let (end, score) = view.best_span(&w.text, f).unwrap();
            assert_eq!(score, 0.0);
            assert!(end <= view.total_frames(), "spans never cross the window edge");
            f = end;
            i += 1;
        }
        assert_eq!(f, view.total_frames());
        assert!(view.best_span("AAA", view.total_frames()).is_none());
    }
}
