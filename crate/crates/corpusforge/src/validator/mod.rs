//! Validation decoding over the alignment graph.
//!
//! A pluggable acoustic scorer answers one question: given a word and a
//! start frame, where would it end and how well does it fit. The decoder
//! runs Viterbi token passing over (state, frame) pairs, taking word arcs
//! through the scorer and epsilon arcs (leaks, the trailing return) for
//! free within a frame. Each token remembers the reference position where
//! it last left the forced path; return arcs may only land within the
//! graph's `return_window` words of that origin, which is what bounds how
//! much reference a single leak episode can delete.
//!
//! Edit-script extraction, reference rewriting and the WER gate live in
//! [`edits`].

pub mod edits;

pub use edits::{
    path_to_edits, rewrite_reference, validate_segment, validation_wer, EditEntry, EditKind,
    EditScript, RewritePolicy, ValidateOptions, ValidationResult,
};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use thiserror::Error;

use crate::align_graph::{AlignGraph, ArcKind, ArcLabel};

/// Frame-synchronous acoustic interface. Implementations must be
/// deterministic: equal (word, from_frame) queries get equal answers.
pub trait AcousticScorer: Sync {
    /// Best span for `word` starting at `from_frame`: the end frame
    /// (exclusive, > from_frame) and the span's log-score (≤ 0 is typical;
    /// the decoder adds its negation to the path cost). None when the word
    /// cannot start there.
    fn best_span(&self, word: &str, from_frame: u32) -> Option<(u32, f64)>;

    fn total_frames(&self) -> u32;

    /// Frames per second of audio.
    fn frame_rate(&self) -> u32 {
        100
    }
}

/// One decoded arc with the frames it consumed. Epsilon arcs are
/// zero-width.
#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub arc: usize,
    pub start_frame: u32,
    pub end_frame: u32,
    pub acoustic_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestPath {
    pub steps: Vec<PathStep>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no accepting path (beam too narrow or audio rejects every word)")]
pub struct NoPathError;

/// Ordered f64 so tokens can live in heaps and sorted sets.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// (state, leak origin); origin None while on the forced path.
type Key = (usize, Option<u32>);

#[derive(Debug, Clone, Copy)]
struct Tok {
    cost: f64,
    trace: u32,
}

struct Trace {
    prev: u32,
    arc: u32,
    start: u32,
    end: u32,
    acoustic: f64,
}

const NO_TRACE: u32 = u32::MAX;

pub const DEFAULT_BEAM: usize = 64;

/// Min-cost accepting path with all arc kinds available.
pub fn decode(
    g: &AlignGraph,
    scorer: &dyn AcousticScorer,
    beam: usize,
) -> Result<BestPath, NoPathError> {
    decode_masked(g, scorer, beam, true)
}

/// Like [`decode`], but with filler arcs removed from consideration when
/// `fillers_on` is false; that is how the no-rewriting policy is enforced
/// at decode time rather than by rebuilding the graph.
pub fn decode_masked(
    g: &AlignGraph,
    scorer: &dyn AcousticScorer,
    beam: usize,
    fillers_on: bool,
) -> Result<BestPath, NoPathError> {
    let total = scorer.total_frames();
    assert!(total > 0, "scorer must cover at least one frame");
    assert!(beam > 0, "beam must be positive");
    let n_ref = g.ref_words.len() as u32;

    let mut frames: Vec<BTreeMap<Key, Tok>> = vec![BTreeMap::new(); total as usize + 1];
    let mut arena: Vec<Trace> = Vec::new();
    frames[0].insert((g.start, None), Tok { cost: 0.0, trace: NO_TRACE });

    for t in 0..=total {
        let mut settled = std::mem::take(&mut frames[t as usize]);
        if settled.is_empty() {
            continue;
        }

        if settled.len() > beam {
            let mut ranked: Vec<(Key, Tok)> =
                settled.iter().map(|(k, v)| (*k, *v)).collect();
            ranked.sort_by_key(|(k, v)| (Cost(v.cost), k.0, k.1));
            ranked.truncate(beam);
            settled = ranked.into_iter().collect();
        }

        // Epsilon closure within the frame: leak descents and the trailing
        // epsilon return. Costs are non-negative, so Dijkstra settles each
        // (state, origin) at its minimum.
        let mut heap: BinaryHeap<Reverse<(Cost, Key)>> =
            settled.iter().map(|(k, v)| Reverse((Cost(v.cost), *k))).collect();
        while let Some(Reverse((Cost(cost), key))) = heap.pop() {
            if settled.get(&key).map_or(true, |tok| tok.cost < cost) {
                continue;
            }
            let trace = settled[&key].trace;
            for &ai in &g.out_arcs[key.0] {
                let arc = &g.arcs[ai];
                if arc.label != ArcLabel::Epsilon {
                    continue;
                }
                let new_origin = match arc.kind {
                    ArcKind::Leak => key.1.or(Some(g.states[key.0].ref_position)),
                    ArcKind::Return => {
                        // Trailing deletion: everything after the origin is
                        // dropped, which must fit in the window.
                        let origin = key.1.expect("return without a leak origin");
                        if n_ref - origin > g.return_window {
                            continue;
                        }
                        None
                    }
                    _ => continue,
                };
                let nk = (arc.to, new_origin);
                let nc = cost + arc.cost;
                if settled.get(&nk).map_or(true, |tok| nc < tok.cost) {
                    arena.push(Trace { prev: trace, arc: ai as u32, start: t, end: t, acoustic: 0.0 });
                    settled.insert(nk, Tok { cost: nc, trace: arena.len() as u32 - 1 });
                    heap.push(Reverse((Cost(nc), nk)));
                }
            }
        }

        if t < total {
            for (key, tok) in &settled {
                for &ai in &g.out_arcs[key.0] {
                    let arc = &g.arcs[ai];
                    let word = match &arc.label {
                        ArcLabel::Word(w) => w.as_str(),
                        // Punctuation self-loops are positional tags, never
                        // decoded; epsilon arcs were handled in the closure.
                        _ => continue,
                    };
                    if !fillers_on && arc.kind == ArcKind::Filler {
                        continue;
                    }
                    let new_origin = match arc.kind {
                        ArcKind::Forced => {
                            debug_assert!(key.1.is_none(), "forced arc off the forced path");
                            None
                        }
                        ArcKind::Garbage | ArcKind::Filler => key.1,
                        ArcKind::Return => {
                            let origin = key.1.expect("return without a leak origin");
                            let landing = g.states[arc.to].ref_position;
                            if landing < origin + 1 || landing - 1 - origin > g.return_window {
                                continue;
                            }
                            None
                        }
                        ArcKind::Leak => unreachable!("leak arcs are epsilon"),
                    };
                    let Some((end, log_score)) = scorer.best_span(word, t) else {
                        continue;
                    };
                    debug_assert!(end > t, "scorer span must advance");
                    if end <= t || end > total {
                        continue;
                    }
                    let nk = (arc.to, new_origin);
                    let nc = tok.cost + arc.cost - log_score;
                    let slot = &mut frames[end as usize];
                    if slot.get(&nk).map_or(true, |existing| nc < existing.cost) {
                        arena.push(Trace {
                            prev: tok.trace,
                            arc: ai as u32,
                            start: t,
                            end,
                            acoustic: log_score,
                        });
                        slot.insert(nk, Tok { cost: nc, trace: arena.len() as u32 - 1 });
                    }
                }
            }
        }

        frames[t as usize] = settled;
    }

    let accepted = frames[total as usize]
        .iter()
        .filter(|((state, _), _)| *state == g.final_state)
        .min_by_key(|((state, origin), tok)| (Cost(tok.cost), *state, *origin));
    let Some((_, tok)) = accepted else {
        return Err(NoPathError);
    };

    let mut steps = Vec::new();
    let mut cursor = tok.trace;
    while cursor != NO_TRACE {
        let tr = &arena[cursor as usize];
        steps.push(PathStep {
            arc: tr.arc as usize,
            start_frame: tr.start,
            end_frame: tr.end,
            acoustic_score: tr.acoustic,
        });
        cursor = tr.prev;
    }
    steps.reverse();
    Ok(BestPath { steps, total_cost: tok.cost })
}
