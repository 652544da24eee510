//! Frame-level segmentation scoring against gold labels.
//!
//! Both sides of the comparison are rendered onto the same 10 ms grid: a
//! labeling assigns every frame a word (or silence) plus a bit saying
//! whether any segment claimed it at all. Precision asks how many claimed
//! frames carry the gold label; recall asks how much gold speech the
//! claimed frames recovered. Sweeping the validation-WER cap trades one
//! against the other, and the working-point picker walks that curve.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunk_match::TimedWord;

pub const FRAME_RATE: u32 = 100;

/// One segment with its word timing, the unit both labelings are built
/// from. Word times are absolute document times, like the segment range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentWords {
    pub begin_s: f64,
    pub end_s: f64,
    pub words: Vec<TimedWord>,
}

impl SegmentWords {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.begin_s
    }
}

fn frame_of(t: f64) -> u32 {
    (t * FRAME_RATE as f64).round() as u32
}

/// Per-frame word labels with an interned vocabulary; label 0 is silence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabeling {
    pub frame_rate: u32,
    pub total_frames: u32,
    vocab: Vec<String>,
    labels: Vec<u32>,
    retrieved: Vec<bool>,
}

impl FrameLabeling {
    /// The word at a frame; None for silence.
    pub fn label_at(&self, frame: u32) -> Option<&str> {
        match self.labels[frame as usize] {
            0 => None,
            id => Some(self.vocab[id as usize - 1].as_str()),
        }
    }

    pub fn is_retrieved(&self, frame: u32) -> bool {
        self.retrieved[frame as usize]
    }

    pub fn retrieved_frames(&self) -> u32 {
        self.retrieved.iter().filter(|&&r| r).count() as u32
    }

    pub fn speech_frames(&self) -> u32 {
        self.labels.iter().filter(|&&l| l != 0).count() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("segments overlap at {at_s} s")]
pub struct OverlapError {
    pub at_s: f64,
}

/// Renders segments onto the frame grid: frames covered by a word's span
/// get that word, frames inside a segment but between words stay silence,
/// frames outside every segment stay silence and unretrieved. Word spans
/// are half-open in frames; where rounding makes neighbors collide, the
/// earlier word keeps the shared frame.
pub fn frame_labels(
    segments: &[SegmentWords],
    total_frames: u32,
) -> Result<FrameLabeling, OverlapError> {
    let mut vocab: Vec<String> = Vec::new();
    let mut ids: BTreeMap<&str, u32> = BTreeMap::new();
    let mut labels = vec![0u32; total_frames as usize];
    let mut retrieved = vec![false; total_frames as usize];

    for seg in segments {
        let sb = frame_of(seg.begin_s).min(total_frames);
        let se = frame_of(seg.end_s).min(total_frames);
        for f in sb..se {
            if retrieved[f as usize] {
                return Err(OverlapError { at_s: f as f64 / FRAME_RATE as f64 });
            }
            retrieved[f as usize] = true;
        }
        for w in &seg.words {
            let id = *ids.entry(w.text.as_str()).or_insert_with(|| {
                vocab.push(w.text.clone());
                vocab.len() as u32
            });
            let wb = frame_of(w.begin_s).max(sb);
            let we = frame_of(w.end_s).min(se);
            for f in wb..we {
                if labels[f as usize] == 0 {
                    labels[f as usize] = id;
                }
            }
        }
    }
    Ok(FrameLabeling { frame_rate: FRAME_RATE, total_frames, vocab, labels, retrieved })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("labelings cover {pipeline} vs {human} frames")]
    LengthMismatch { pipeline: u32, human: u32 },
    #[error("ground truth has no speech frames")]
    NoHumanSpeech,
}

/// Frame tallies that add across documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrCounts {
    /// Retrieved frames whose label agrees with the gold label (silence
    /// agreeing with silence included).
    pub matched_retrieved: u64,
    pub retrieved: u64,
    /// The subset of matched frames where the gold label is a word.
    pub matched_speech: u64,
    pub human_speech: u64,
}

impl std::ops::AddAssign for PrCounts {
    fn add_assign(&mut self, o: PrCounts) {
        self.matched_retrieved += o.matched_retrieved;
        self.retrieved += o.retrieved;
        self.matched_speech += o.matched_speech;
        self.human_speech += o.human_speech;
    }
}

impl PrCounts {
    pub fn precision(&self) -> f64 {
        if self.retrieved == 0 {
            1.0
        } else {
            self.matched_retrieved as f64 / self.retrieved as f64
        }
    }

    pub fn recall(&self) -> Result<f64, EvalError> {
        if self.human_speech == 0 {
            Err(EvalError::NoHumanSpeech)
        } else {
            Ok(self.matched_speech as f64 / self.human_speech as f64)
        }
    }
}

pub fn tally(pipeline: &FrameLabeling, human: &FrameLabeling) -> Result<PrCounts, EvalError> {
    if pipeline.total_frames != human.total_frames {
        return Err(EvalError::LengthMismatch {
            pipeline: pipeline.total_frames,
            human: human.total_frames,
        });
    }
    let mut c = PrCounts::default();
    for f in 0..pipeline.total_frames {
        let gold = human.label_at(f);
        if gold.is_some() {
            c.human_speech += 1;
        }
        if pipeline.is_retrieved(f) {
            c.retrieved += 1;
            if pipeline.label_at(f) == gold {
                c.matched_retrieved += 1;
                if gold.is_some() {
                    c.matched_speech += 1;
                }
            }
        }
    }
    Ok(c)
}

pub fn precision_recall(
    pipeline: &FrameLabeling,
    human: &FrameLabeling,
) -> Result<(f64, f64), EvalError> {
    let c = tally(pipeline, human)?;
    Ok((c.precision(), c.recall()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub cap: f64,
    pub precision: f64,
    pub recall: f64,
    pub retained_hours: f64,
}

/// One document's material for the cap sweep: its gold segments and its
/// validated pipeline segments with their WER estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct DocEval {
    pub total_frames: u32,
    pub human: Vec<SegmentWords>,
    pub scored: Vec<(f64, SegmentWords)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Overlap(#[from] OverlapError),
}

/// Sweeps the cap over every document: at each cap, segments at or under
/// it are retained and scored against the gold labeling.
pub fn pr_curve(docs: &[DocEval], caps: &[f64]) -> Result<Vec<PrPoint>, CurveError> {
    let human: Vec<FrameLabeling> = docs
        .iter()
        .map(|d| frame_labels(&d.human, d.total_frames))
        .collect::<Result<_, _>>()?;

    let mut curve = Vec::with_capacity(caps.len());
    for &cap in caps {
        let mut counts = PrCounts::default();
        let mut retained_s = 0.0;
        for (doc, gold) in docs.iter().zip(&human) {
            let kept: Vec<SegmentWords> = doc
                .scored
                .iter()
                .filter(|(wer, _)| *wer <= cap)
                .map(|(_, s)| s.clone())
                .collect();
            retained_s += kept.iter().map(|s| s.duration_s()).sum::<f64>();
            let labeling = frame_labels(&kept, doc.total_frames)?;
            counts += tally(&labeling, gold)?;
        }
        curve.push(PrPoint {
            cap,
            precision: counts.precision(),
            recall: counts.recall()?,
            retained_hours: retained_s / 3600.0,
        });
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkingPoint {
    pub point: PrPoint,
    /// True when no admissible cap reached the target hours.
    pub shortfall: bool,
}

/// Picks the smallest cap at or under `max_cap` whose retained hours meet
/// the target; falls back to the largest admissible cap, flagged, when
/// none does.
pub fn select_working_point(curve: &[PrPoint], target_hours: f64, max_cap: f64) -> WorkingPoint {
    assert!(!curve.is_empty(), "curve must have at least one point");
    let mut admissible: Vec<&PrPoint> = curve.iter().filter(|p| p.cap <= max_cap).collect();
    if admissible.is_empty() {
        // Nothing under the cap limit; report the leftmost point rather
        // than inventing one.
        let mut leftmost = &curve[0];
        for p in curve {
            if p.cap < leftmost.cap {
                leftmost = p;
            }
        }
        return WorkingPoint { point: *leftmost, shortfall: true };
    }
    admissible.sort_by(|a, b| a.cap.total_cmp(&b.cap));
    for p in &admissible {
        if p.retained_hours >= target_hours {
            return WorkingPoint { point: **p, shortfall: false };
        }
    }
    WorkingPoint { point: *admissible[admissible.len() - 1], shortfall: true }
}
