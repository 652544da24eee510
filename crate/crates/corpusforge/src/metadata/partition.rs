//! Subset partitioning: assigns validated segments to nested training
//! subsets (XS through XL) so that each subset hits its per-source hour
//! targets within tolerance and smaller subsets are contained in larger ones.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Manifest, Source};

/// Relative tolerance on per-source subset hours.
pub const HOUR_TOLERANCE: f64 = 0.02;

/// Per-subset admission rule: maximum WER estimate, and which estimate to
/// read (the strict one, or the rewritten one when the record carries it).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubsetCap {
    pub cap: f64,
    pub use_rewritten: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSpec {
    /// Subset name -> target hours (totals across sources).
    pub targets: BTreeMap<String, f64>,
    /// Source -> fraction of each subset; fractions sum to 1.
    pub ratios: BTreeMap<Source, f64>,
    pub seed: u64,
    /// Optional admission rules; subsets without an entry admit everything.
    #[serde(default)]
    pub caps: BTreeMap<String, SubsetCap>,
}

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("source ratios sum to {0}, expected 1")]
    BadRatios(f64),
    #[error("subset {subset}/{src}: {available_h:.4} h available, {target_h:.4} h required")]
    InsufficientData { subset: String, src: Source, available_h: f64, target_h: f64 },
    #[error("subset {subset}/{src}: reached {achieved_h:.4} h for a {target_h:.4} h target")]
    TargetMissed { subset: String, src: Source, achieved_h: f64, target_h: f64 },
}

struct SegRef {
    audio: usize,
    seg: usize,
    seconds: f64,
    wer: f64,
    wer_rewritten: Option<f64>,
}

impl SegRef {
    fn admitted(&self, cap: Option<&SubsetCap>) -> bool {
        match cap {
            None => true,
            Some(c) => {
                let wer = if c.use_rewritten {
                    self.wer_rewritten.unwrap_or(self.wer)
                } else {
                    self.wer
                };
                wer <= c.cap + 1e-9
            }
        }
    }
}

/// Tags segments (and their audios) with subset names. Subsets are filled in
/// ascending order of target hours over a per-source shuffled stream; since
/// every subset extends the selection of the previous one, nesting holds by
/// construction. Fully deterministic for a given spec.
pub fn partition_subsets(m: &Manifest, spec: &PartitionSpec) -> Result<Manifest, PartitionError> {
    let ratio_sum: f64 = spec.ratios.values().sum();
    if (ratio_sum - 1.0).abs() > 1e-6 {
        return Err(PartitionError::BadRatios(ratio_sum));
    }

    // Subsets ordered by target hours: targets nested by construction.
    let mut subsets: Vec<(&String, f64)> = spec.targets.iter().map(|(k, &v)| (k, v)).collect();
    subsets.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(b.0)));

    let mut result = m.clone();
    for audio in &mut result.audios {
        audio.subsets.clear();
        for seg in &mut audio.segments {
            seg.subsets.clear();
        }
    }

    for (stream_idx, source) in Source::ALL.iter().enumerate() {
        let ratio = spec.ratios.get(source).copied().unwrap_or(0.0);
        let mut pool: Vec<SegRef> = Vec::new();
        for (ai, audio) in m.audios.iter().enumerate() {
            if audio.source != *source {
                continue;
            }
            for (si, seg) in audio.segments.iter().enumerate() {
                pool.push(SegRef {
                    audio: ai,
                    seg: si,
                    seconds: seg.duration_s(),
                    wer: seg.wer_estimate,
                    wer_rewritten: seg.wer_estimate_rewritten,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream_idx as u64);
        pool.shuffle(&mut rng);

        let mut selected: BTreeSet<usize> = BTreeSet::new();
        let mut selected_seconds = 0.0f64;
        for (subset, target_h) in &subsets {
            let cap = spec.caps.get(*subset);
            let target = target_h * ratio * 3600.0;
            let tol = HOUR_TOLERANCE * target;

            let available: f64 = pool
                .iter()
                .enumerate()
                .filter(|(i, s)| selected.contains(i) || s.admitted(cap))
                .map(|(_, s)| s.seconds)
                .sum();
            if available + tol < target {
                return Err(PartitionError::InsufficientData {
                    subset: (*subset).clone(),
                    src: *source,
                    available_h: available / 3600.0,
                    target_h: target / 3600.0,
                });
            }

            // First fit along the shuffled stream, never overshooting.
            for (i, seg) in pool.iter().enumerate() {
                if selected.contains(&i) || !seg.admitted(cap) {
                    continue;
                }
                if selected_seconds + seg.seconds <= target {
                    selected.insert(i);
                    selected_seconds += seg.seconds;
                }
            }
            // One closing pick to tighten the gap if it helps.
            if (target - selected_seconds).abs() > tol {
                let gap = target - selected_seconds;
                let best = pool
                    .iter()
                    .enumerate()
                    .filter(|(i, s)| !selected.contains(i) && s.admitted(cap))
                    .min_by(|a, b| {
                        let da = (gap - a.1.seconds).abs();
                        let db = (gap - b.1.seconds).abs();
                        da.partial_cmp(&db).unwrap().then_with(|| a.0.cmp(&b.0))
                    });
                if let Some((i, seg)) = best {
                    if (gap - seg.seconds).abs() < gap.abs() {
                        selected.insert(i);
                        selected_seconds += seg.seconds;
                    }
                }
            }
            if (selected_seconds - target).abs() > tol {
                return Err(PartitionError::TargetMissed {
                    subset: (*subset).clone(),
                    src: *source,
                    achieved_h: selected_seconds / 3600.0,
                    target_h: target / 3600.0,
                });
            }
            for &i in &selected {
                let r = &pool[i];
                let seg = &mut result.audios[r.audio].segments[r.seg];
                if !seg.subsets.iter().any(|s| s == *subset) {
                    seg.subsets.push((*subset).clone());
                }
            }
        }
    }

    for audio in &mut result.audios {
        let mut union: Vec<String> = Vec::new();
        for seg in &audio.segments {
            for s in &seg.subsets {
                if !union.contains(s) {
                    union.push(s.clone());
                }
            }
        }
        // Keep the audio-level list in target order (smallest subset first).
        let order: Vec<&String> = {
            let mut v: Vec<(&String, f64)> =
                spec.targets.iter().map(|(k, &h)| (k, h)).collect();
            v.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then_with(|| a.0.cmp(b.0)));
            v.into_iter().map(|(k, _)| k).collect()
        };
        union.sort_by_key(|s| order.iter().position(|o| *o == s).unwrap_or(usize::MAX));
        audio.subsets = union;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metadata::test_support::random_manifest;

    fn spec(targets: &[(&str, f64)], seed: u64) -> PartitionSpec {
        PartitionSpec {
            targets: targets.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            ratios: [
                (Source::Audiobook, 0.2655),
                (Source::Podcast, 0.3499),
                (Source::Youtube, 0.3846),
            ]
            .into_iter()
            .collect(),
            seed,
            caps: BTreeMap::new(),
        }
    }

    #[test]
    fn nesting_and_tolerance_hold() {
        let m = random_manifest(100, 400);
        let total = m.segment_hours();
        assert!(total > 1.0, "fixture too small: {total} h");
        let spec = spec(&[("XS", 0.05), ("S", 0.2), ("M", 0.5)], 7);
        let part = partition_subsets(&m, &spec).unwrap();

        for (subset, target) in &spec.targets {
            let by_source = part.subset_hours_by_source(subset);
            for (source, ratio) in &spec.ratios {
                let got = by_source.get(source).copied().unwrap_or(0.0);
                let want = target * ratio;
                assert!(
                    (got - want).abs() <= HOUR_TOLERANCE * want + 1e-9,
                    "{subset}/{source}: {got} h vs {want} h"
                );
            }
        }
        // Nesting: every XS segment is in S, every S segment in M.
        for audio in &part.audios {
            for seg in &audio.segments {
                let has = |s: &str| seg.subsets.iter().any(|x| x == s);
                if has("XS") {
                    assert!(has("S") && has("M"));
                }
                if has("S") {
                    assert!(has("M"));
                }
            }
        }
        part.validate().unwrap();
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let m = random_manifest(200, 300);
        let s = spec(&[("XS", 0.05), ("S", 0.15)], 42);
        let a = partition_subsets(&m, &s).unwrap();
        let b = partition_subsets(&m, &s).unwrap();
        assert_eq!(crate::metadata::save_manifest(&a), crate::metadata::save_manifest(&b));
    }

    #[test]
    fn insufficient_data_is_reported() {
        let m = random_manifest(300, 10);
        let err = partition_subsets(&m, &spec(&[("XL", 10_000.0)], 1)).unwrap_err();
        assert!(matches!(err, PartitionError::InsufficientData { .. }), "{err}");
    }

    #[test]
    fn caps_filter_by_wer() {
        let mut m = random_manifest(400, 300);
        // Mark a deterministic half of the segments as error-free.
        let mut flip = false;
        for audio in &mut m.audios {
            for seg in &mut audio.segments {
                seg.wer_estimate = if flip { 0.0 } else { 8.0 };
                flip = !flip;
            }
        }
        let mut s = spec(&[("XS", 0.02)], 5);
        s.caps.insert("XS".to_string(), SubsetCap { cap: 0.0, use_rewritten: false });
        let part = partition_subsets(&m, &s).unwrap();
        for audio in &part.audios {
            for seg in &audio.segments {
                if seg.subsets.iter().any(|x| x == "XS") {
                    assert_eq!(seg.wer_estimate, 0.0);
                }
            }
        }
    }
}
