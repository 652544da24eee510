//! From decoded paths to edit scripts, reference rewriting and the WER
//! gate.
//!
//! The graph natively expresses only insertions (garbage words) and
//! deletions (leak/return bypasses). Substitutions are recovered after the
//! fact: within one leak episode, bypassed reference words get nominal
//! frame spans by evenly splitting the episode's audio, and a garbage word
//! whose span overlaps a bypassed word's span is reclassified as a
//! substitution of it.

use serde::{Deserialize, Serialize};

use crate::align_graph::{AlignGraph, ArcKind, ArcLabel};
use crate::segmenter::CandidateSegment;
use crate::textnorm::{Token, TokenSeq};

use super::{decode_masked, AcousticScorer, BestPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EditKind {
    Cor,
    Sub,
    Ins,
    Del,
    FillerCor,
}

/// One aligned reference or hypothesis word. `ref_pos` is an index into
/// the reference word list: the word's own index for COR/SUB/DEL, the
/// insertion point (insert before that word) for INS/FILLER_COR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEntry {
    pub kind: EditKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ref_word: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyp_word: Option<String>,
    pub ref_pos: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EditScript {
    pub entries: Vec<EditEntry>,
}

impl EditScript {
    pub fn count(&self, kind: EditKind) -> usize {
        self.entries.iter().filter(|e| e.kind == kind).count()
    }

    /// Substitutions whose two sides carry the same surface form. A decoder
    /// working from consistent inputs never produces these (the forced arc
    /// is always cheaper), so any hit means the scorer and the reference
    /// disagree about where words live.
    pub fn surface_mismatches(&self) -> Vec<&EditEntry> {
        self.entries
            .iter()
            .filter(|e| e.kind == EditKind::Sub && e.ref_word == e.hyp_word)
            .collect()
    }
}

/// One leak episode being accumulated while walking a path.
struct Episode {
    origin: u32,
    start_frame: u32,
    ins: Vec<EditEntry>,
    fillers: Vec<EditEntry>,
}

fn close_episode(ep: Episode, deleted_to: u32, return_start: u32, g: &AlignGraph, out: &mut Vec<EditEntry>) {
    let deleted: Vec<u32> = (ep.origin..deleted_to).collect();

    // Nominal spans: the episode's audio split evenly over the bypassed
    // words, used only to decide which garbage word substitutes for which.
    let mut paired: Vec<Option<usize>> = vec![None; deleted.len()];
    let mut taken = vec![false; ep.ins.len()];
    if !deleted.is_empty() {
        let lo = ep.start_frame as f64;
        let width = (return_start as f64 - lo) / deleted.len() as f64;
        for (di, slot) in paired.iter_mut().enumerate() {
            let (span_lo, span_hi) = (lo + di as f64 * width, lo + (di + 1) as f64 * width);
            let mut best: Option<(f64, usize)> = None;
            for (ii, ins) in ep.ins.iter().enumerate() {
                if taken[ii] {
                    continue;
                }
                let (b, e) = ins.frames.expect("garbage entries carry frames");
                let overlap = (e as f64).min(span_hi) - (b as f64).max(span_lo);
                if overlap > 0.0 && best.map_or(true, |(bo, _)| overlap > bo) {
                    best = Some((overlap, ii));
                }
            }
            if let Some((_, ii)) = best {
                taken[ii] = true;
                *slot = Some(ii);
            }
        }
    }

    // Unpaired insertions and fillers first (already in time order), then
    // the bypassed words in reference order.
    let mut loose: Vec<EditEntry> = Vec::new();
    for (ii, ins) in ep.ins.iter().enumerate() {
        if !taken[ii] {
            loose.push(ins.clone());
        }
    }
    loose.extend(ep.fillers.iter().cloned());
    loose.sort_by_key(|e| e.frames.map(|(b, _)| b));
    out.extend(loose);

    for (di, &rp) in deleted.iter().enumerate() {
        let ref_word = g.ref_words[rp as usize].clone();
        out.push(match paired[di] {
            Some(ii) => EditEntry {
                kind: EditKind::Sub,
                ref_word: Some(ref_word),
                hyp_word: ep.ins[ii].hyp_word.clone(),
                ref_pos: rp,
                frames: ep.ins[ii].frames,
            },
            None => EditEntry {
                kind: EditKind::Del,
                ref_word: Some(ref_word),
                hyp_word: None,
                ref_pos: rp,
                frames: None,
            },
        });
    }
}

/// Classifies every step of an accepting path. Reference words consumed on
/// the forced path or by a return arc come out COR; see the module docs
/// for how leak episodes become INS/DEL/SUB.
pub fn path_to_edits(p: &BestPath, g: &AlignGraph) -> EditScript {
    let mut entries: Vec<EditEntry> = Vec::new();
    let mut pos: u32 = 0;
    let mut episode: Option<Episode> = None;

    for step in &p.steps {
        let arc = &g.arcs[step.arc];
        let word = arc.label.word().map(str::to_string);
        match arc.kind {
            ArcKind::Forced => {
                let w = word.expect("decoder never takes punctuation arcs");
                entries.push(EditEntry {
                    kind: EditKind::Cor,
                    ref_word: Some(w.clone()),
                    hyp_word: Some(w),
                    ref_pos: pos,
                    frames: Some((step.start_frame, step.end_frame)),
                });
                pos += 1;
            }
            ArcKind::Leak => {
                episode.get_or_insert(Episode {
                    origin: pos,
                    start_frame: step.start_frame,
                    ins: Vec::new(),
                    fillers: Vec::new(),
                });
            }
            ArcKind::Garbage => {
                let ep = episode.as_mut().expect("garbage loops live behind a leak");
                ep.ins.push(EditEntry {
                    kind: EditKind::Ins,
                    ref_word: None,
                    hyp_word: word,
                    ref_pos: 0, // patched when the episode closes
                    frames: Some((step.start_frame, step.end_frame)),
                });
            }
            ArcKind::Filler => {
                let entry = EditEntry {
                    kind: EditKind::FillerCor,
                    ref_word: None,
                    hyp_word: word,
                    ref_pos: pos,
                    frames: Some((step.start_frame, step.end_frame)),
                };
                match episode.as_mut() {
                    Some(ep) => ep.fillers.push(entry),
                    None => entries.push(entry),
                }
            }
            ArcKind::Return => {
                let mut ep = episode.take().expect("return arcs live behind a leak");
                let landing = match &arc.label {
                    // Word return: lands one past the consumed word.
                    ArcLabel::Word(_) => g.states[arc.to].ref_position,
                    // Trailing epsilon return: everything left is bypassed.
                    _ => g.ref_words.len() as u32 + 1,
                };
                let consumed = landing - 1;
                for f in &mut ep.fillers {
                    f.ref_pos = consumed;
                }
                for i in &mut ep.ins {
                    i.ref_pos = consumed;
                }
                close_episode(ep, consumed, step.start_frame, g, &mut entries);
                if let Some(w) = word {
                    entries.push(EditEntry {
                        kind: EditKind::Cor,
                        ref_word: Some(w.clone()),
                        hyp_word: Some(w),
                        ref_pos: consumed,
                        frames: Some((step.start_frame, step.end_frame)),
                    });
                }
                pos = consumed.min(g.ref_words.len() as u32 - 1) + 1;
            }
        }
    }
    debug_assert!(episode.is_none(), "accepting paths close every episode");
    EditScript { entries }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewritePolicy {
    pub fillers: bool,
    pub disfluency: bool,
}

impl RewritePolicy {
    pub const STRICT: RewritePolicy = RewritePolicy { fillers: false, disfluency: false };
    pub const LENIENT: RewritePolicy = RewritePolicy { fillers: true, disfluency: true };

    pub fn any(&self) -> bool {
        self.fillers || self.disfluency
    }
}

/// Words to splice into the reference: insert before word `ref_pos`, or
/// after the last word when `ref_pos` equals the word count.
#[derive(Debug, Clone)]
struct Insertion {
    ref_pos: u32,
    entry_index: usize,
    word: String,
}

/// Applies the rewriting passes: filler words spoken where the reference
/// has none become part of the reference, and a run of repeated insertions
/// next to a matching correct word (the "it's it's it's" stutter) is kept
/// as repetition rather than counted as errors. Returns the rewritten
/// reference and the relabeled script.
pub fn rewrite_reference(
    es: &EditScript,
    ref_seq: &TokenSeq,
    policy: RewritePolicy,
) -> (TokenSeq, EditScript) {
    let mut script = es.clone();
    let mut insertions: Vec<Insertion> = Vec::new();

    if policy.fillers {
        for (i, e) in script.entries.iter_mut().enumerate() {
            if e.kind == EditKind::FillerCor {
                e.kind = EditKind::Cor;
                e.ref_word = e.hyp_word.clone();
                insertions.push(Insertion {
                    ref_pos: e.ref_pos,
                    entry_index: i,
                    word: e.hyp_word.clone().expect("fillers carry a word"),
                });
            }
        }
    }

    if policy.disfluency {
        let entries = &mut script.entries;
        let mut i = 0;
        while i < entries.len() {
            if entries[i].kind != EditKind::Ins {
                i += 1;
                continue;
            }
            let word = entries[i].hyp_word.clone();
            let mut j = i + 1;
            while j < entries.len()
                && entries[j].kind == EditKind::Ins
                && entries[j].hyp_word == word
            {
                j += 1;
            }
            // A repetition is only recognized against the matched copy of
            // the same word directly before or after the run.
            let word_cor = |e: &EditEntry| {
                e.kind == EditKind::Cor && e.ref_word.is_some() && e.ref_word == word
            };
            let before: Option<u32> = match i.checked_sub(1) {
                Some(k) if word_cor(&entries[k]) => Some(entries[k].ref_pos),
                _ => None,
            };
            let after: Option<u32> = match entries.get(j) {
                Some(e) if word_cor(e) => Some(e.ref_pos),
                _ => None,
            };
            let anchor = match (before, after) {
                (Some(b), _) => Some(b + 1),
                (None, Some(a)) => Some(a),
                (None, None) => None,
            };
            if let Some(at) = anchor {
                for (k, e) in entries.iter_mut().enumerate().take(j).skip(i) {
                    e.kind = EditKind::Cor;
                    e.ref_word = e.hyp_word.clone();
                    e.ref_pos = at;
                    insertions.push(Insertion {
                        ref_pos: at,
                        entry_index: k,
                        word: e.hyp_word.clone().expect("insertions carry a word"),
                    });
                }
            }
            i = j;
        }
    }

    insertions.sort_by_key(|ins| (ins.ref_pos, ins.entry_index));

    // Splice into the token stream. Insertions at word index k go directly
    // before the k-th word token, so they stay inside any surrounding
    // punctuation; a zero-width span marks them as absent from the raw
    // transcript.
    let word_idx = ref_seq.word_indices();
    let token_slot = |ref_pos: u32| -> usize {
        let k = ref_pos as usize;
        if k < word_idx.len() {
            word_idx[k]
        } else {
            word_idx.last().map_or(ref_seq.tokens.len(), |&last| last + 1)
        }
    };
    let mut rewritten = TokenSeq::default();
    let mut pending = insertions.iter().peekable();
    for (ti, tok) in ref_seq.tokens.iter().enumerate() {
        while pending.peek().map_or(false, |ins| token_slot(ins.ref_pos) == ti) {
            let ins = pending.next().unwrap();
            let at = ref_seq.raw_spans[ti].0;
            rewritten.push(Token::word(ins.word.clone()), (at, at));
        }
        rewritten.push(tok.clone(), ref_seq.raw_spans[ti]);
    }
    let end = ref_seq.raw_spans.last().map_or(0, |s| s.1);
    for ins in pending {
        rewritten.push(Token::word(ins.word.clone()), (end, end));
    }

    (rewritten, script)
}

/// Word error rate of a script, in percent. The denominator is the
/// reference the script is scored against (COR + SUB + DEL covers each of
/// its words exactly once); FILLER_COR is not an error and not a
/// reference word.
pub fn validation_wer(es: &EditScript) -> f64 {
    let denom = es.count(EditKind::Cor) + es.count(EditKind::Sub) + es.count(EditKind::Del);
    let num = es.count(EditKind::Sub) + es.count(EditKind::Ins) + es.count(EditKind::Del);
    assert!(denom > 0, "scripts always cover a non-empty reference");
    100.0 * num as f64 / denom as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub cap: f64,
    /// Compare WER to the cap with `<` instead of the default `≤`.
    pub cap_exclusive: bool,
    pub policy: RewritePolicy,
    pub beam: usize,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            cap: 0.0,
            cap_exclusive: false,
            policy: RewritePolicy::STRICT,
            beam: super::DEFAULT_BEAM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub sid: String,
    /// None when no accepting path existed.
    pub wer: Option<f64>,
    pub passed: bool,
    pub edit_script: EditScript,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewritten_ref: Option<TokenSeq>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fail_reason: Option<String>,
}

/// Decodes one segment against its graph and gates it by the WER cap.
/// Filler arcs are only offered to the decoder when the policy rewrites
/// them into the reference; otherwise a spoken filler must survive as a
/// garbage insertion and count against the segment.
pub fn validate_segment(
    sid: &str,
    seg: &CandidateSegment,
    scorer: &dyn AcousticScorer,
    g: &AlignGraph,
    opts: &ValidateOptions,
) -> ValidationResult {
    let path = match decode_masked(g, scorer, opts.beam, opts.policy.fillers) {
        Ok(p) => p,
        Err(e) => {
            return ValidationResult {
                sid: sid.to_string(),
                wer: None,
                passed: false,
                edit_script: EditScript::default(),
                rewritten_ref: None,
                fail_reason: Some(e.to_string()),
            }
        }
    };

    let raw = path_to_edits(&path, g);
    let (rewritten_ref, script) = if opts.policy.any() {
        let (seq, script) = rewrite_reference(&raw, &seg.tokens, opts.policy);
        (Some(seq), script)
    } else {
        (None, raw)
    };
    if let Some(seq) = &rewritten_ref {
        debug_assert_eq!(
            seq.word_count(),
            script.count(EditKind::Cor) + script.count(EditKind::Sub) + script.count(EditKind::Del),
            "rewritten reference and script must agree on word count"
        );
    }

    let wer = validation_wer(&script);
    let passed = if opts.cap_exclusive { wer < opts.cap } else { wer <= opts.cap };
    ValidationResult {
        sid: sid.to_string(),
        wer: Some(wer),
        passed,
        edit_script: script,
        rewritten_ref,
        fail_reason: None,
    }
}
