//! Corpus manifest: the JSON artifact that records audio documents, their
//! validated segments, and subset membership. Serialization is deterministic
//! (sorted keys, times rounded to milliseconds) so that repeated builds of
//! the same corpus are byte-identical.

pub mod partition;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use md5::{Digest, Md5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::PUNCT_WORDS;

/// Provenance classes for audio documents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Audiobook,
    Podcast,
    Youtube,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Audiobook, Source::Podcast, Source::Youtube];

    pub fn name(&self) -> &'static str {
        match self {
            Source::Audiobook => "audiobook",
            Source::Podcast => "podcast",
            Source::Youtube => "youtube",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Topic categories permitted in `AudioDoc::category` (plus "N/A").
pub const CATEGORIES: [&str; 24] = [
    "Arts",
    "Autos and Vehicles",
    "Business",
    "Comedy",
    "Crime",
    "Education",
    "Entertainment",
    "Film and Animation",
    "Gaming",
    "Health and Fitness",
    "History",
    "Howto and Style",
    "Kids and Family",
    "Leisure",
    "Music",
    "News and Politics",
    "Nonprofits and Activism",
    "People and Blogs",
    "Pets and Animals",
    "Religion and Spirituality",
    "Science and Technology",
    "Society and Culture",
    "Sports",
    "Travel and Events",
];

fn ser_secs<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round_ms(*v))
}

fn ser_secs_opt<S: serde::Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_some(&round_ms(*x)),
        None => s.serialize_none(),
    }
}

/// Rounds a time to millisecond precision for serialization.
pub fn round_ms(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub sid: String,
    #[serde(serialize_with = "ser_secs")]
    pub begin_time: f64,
    #[serde(serialize_with = "ser_secs")]
    pub end_time: f64,
    /// Normalized transcript: uppercase words and the special punctuation words.
    pub text_tn: String,
    /// Raw transcript slice the segment came from.
    pub text_raw: String,
    /// Validation word error rate in percent, strict policy (no rewriting).
    pub wer_estimate: f64,
    /// Validation WER under the rewriting policy, when that pass ran.
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "ser_secs_opt")]
    pub wer_estimate_rewritten: Option<f64>,
    #[serde(default)]
    pub subsets: Vec<String>,
}

impl SegmentRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_time - self.begin_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioDoc {
    pub aid: String,
    pub title: String,
    pub url: String,
    pub path: String,
    #[serde(serialize_with = "ser_secs")]
    pub duration_s: f64,
    pub format: String,
    pub source: Source,
    pub category: String,
    pub md5: String,
    #[serde(default)]
    pub subsets: Vec<String>,
    #[serde(default)]
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub language: String,
    pub version: String,
    pub audios: Vec<AudioDoc>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Parse(serde_json::Error),
    #[error("manifest does not match the schema: {0}")]
    Schema(serde_json::Error),
    #[error("manifest invariant violated: {0}")]
    Invariant(String),
}

/// Parses and validates manifest bytes.
pub fn load_manifest(bytes: &[u8]) -> Result<Manifest, ManifestError> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(ManifestError::Parse)?;
    let manifest: Manifest = serde_json::from_value(value).map_err(ManifestError::Schema)?;
    manifest.validate()?;
    Ok(manifest)
}

/// Serializes a manifest deterministically: keys sorted, times at
/// millisecond precision, two-space indentation, trailing newline.
pub fn save_manifest(m: &Manifest) -> Vec<u8> {
    // Going through Value sorts object keys (serde_json maps are BTreeMaps).
    let value = serde_json::to_value(m).expect("manifest serialization cannot fail");
    let mut bytes = serde_json::to_vec_pretty(&value).expect("manifest serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

fn is_dotted(version: &str) -> bool {
    !version.is_empty()
        && version
            .split('.')
            .all(|part| !part.is_empty() && part.bytes().all(|b| b.is_ascii_alphanumeric()))
}

/// True when `text` sticks to the normalized alphabet: uppercase words with
/// optional apostrophes, plus the four punctuation words.
pub fn is_normalized_text(text: &str) -> bool {
    text.split_whitespace().all(|tok| {
        PUNCT_WORDS.contains(&tok)
            || (tok.starts_with(|c: char| c.is_ascii_uppercase())
                && tok.chars().all(|c| c.is_ascii_uppercase() || c == '\''))
    })
}

impl Manifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        let fail = |msg: String| Err(ManifestError::Invariant(msg));
        if !is_dotted(&self.version) {
            return fail(format!("version {:?} is not a dotted identifier", self.version));
        }
        let mut aids = BTreeSet::new();
        let mut sids = BTreeSet::new();
        for audio in &self.audios {
            if !aids.insert(&audio.aid) {
                return fail(format!("duplicate aid {:?}", audio.aid));
            }
            if audio.duration_s < 0.0 {
                return fail(format!("{}: negative duration", audio.aid));
            }
            if audio.category != "N/A" && !CATEGORIES.contains(&audio.category.as_str()) {
                return fail(format!("{}: unknown category {:?}", audio.aid, audio.category));
            }
            let mut prev_end = 0.0f64;
            let mut seg_subsets: BTreeSet<&str> = BTreeSet::new();
            for seg in &audio.segments {
                if !sids.insert(&seg.sid) {
                    return fail(format!("duplicate sid {:?}", seg.sid));
                }
                if seg.begin_time < -1e-9 || seg.end_time > audio.duration_s + 1e-9 {
                    return fail(format!("{}: segment outside the audio", seg.sid));
                }
                if seg.end_time <= seg.begin_time {
                    return fail(format!("{}: empty or reversed time range", seg.sid));
                }
                if seg.begin_time < prev_end - 1e-9 {
                    return fail(format!("{}: segments overlap or are unsorted", seg.sid));
                }
                if seg.duration_s() >= 20.0 + 1e-9 {
                    return fail(format!("{}: segment is {}s long", seg.sid, seg.duration_s()));
                }
                if !is_normalized_text(&seg.text_tn) {
                    return fail(format!("{}: text_tn is not normalized", seg.sid));
                }
                prev_end = seg.end_time;
                seg_subsets.extend(seg.subsets.iter().map(String::as_str));
            }
            let audio_subsets: BTreeSet<&str> =
                audio.subsets.iter().map(String::as_str).collect();
            if audio_subsets != seg_subsets {
                return fail(format!(
                    "{}: audio subsets {:?} differ from the union of segment subsets",
                    audio.aid, audio.subsets
                ));
            }
        }
        Ok(())
    }

    /// Total segment hours.
    pub fn segment_hours(&self) -> f64 {
        self.audios
            .iter()
            .flat_map(|a| &a.segments)
            .map(|s| s.duration_s())
            .sum::<f64>()
            / 3600.0
    }

    /// Segment hours per source for one subset.
    pub fn subset_hours_by_source(&self, subset: &str) -> std::collections::BTreeMap<Source, f64> {
        let mut out = std::collections::BTreeMap::new();
        for audio in &self.audios {
            for seg in &audio.segments {
                if seg.subsets.iter().any(|s| s == subset) {
                    *out.entry(audio.source).or_insert(0.0) += seg.duration_s() / 3600.0;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerifyStatus {
    Ok,
    MissingFile,
    ChecksumMismatch,
    DurationMismatch,
    SegmentOutOfBounds,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyEntry {
    pub aid: String,
    pub status: VerifyStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<VerifyEntry>,
    pub ok: bool,
}

/// Reads a PCM WAV header and returns the duration of its data chunk.
fn wav_duration_s(bytes: &[u8]) -> Option<f64> {
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    let mut byte_rate: Option<f64> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        let body = pos + 8;
        match id {
            b"fmt " if body + 12 <= bytes.len() => {
                let rate = u32::from_le_bytes(bytes[body + 8..body + 12].try_into().ok()?);
                byte_rate = Some(rate as f64);
            }
            b"data" => {
                return Some(size as f64 / byte_rate?);
            }
            _ => {}
        }
        pos = body + size + size % 2;
    }
    None
}

/// Checks every audio document against the files on disk: existence, md5,
/// duration (WAV only, 50 ms tolerance), and segment bounds. Entries come
/// back sorted by aid.
pub fn verify_manifest(m: &Manifest, file_root: &Path) -> VerificationReport {
    let mut entries: Vec<VerifyEntry> = m
        .audios
        .par_iter()
        .map(|audio| {
            let (status, detail) = verify_audio(audio, file_root);
            VerifyEntry { aid: audio.aid.clone(), status, detail }
        })
        .collect();
    entries.sort_by(|a, b| a.aid.cmp(&b.aid));
    let ok = entries.iter().all(|e| e.status == VerifyStatus::Ok);
    VerificationReport { entries, ok }
}

fn verify_audio(audio: &AudioDoc, file_root: &Path) -> (VerifyStatus, String) {
    let path = file_root.join(&audio.path);
    let bytes = match std::fs::read(&path) {
        Ok(b) => b,
        Err(e) => return (VerifyStatus::MissingFile, format!("{}: {e}", path.display())),
    };
    let digest = format!("{:x}", Md5::digest(&bytes));
    if digest != audio.md5 {
        return (
            VerifyStatus::ChecksumMismatch,
            format!("expected {} found {digest}", audio.md5),
        );
    }
    if let Some(actual) = wav_duration_s(&bytes) {
        if (actual - audio.duration_s).abs() > 0.05 {
            return (
                VerifyStatus::DurationMismatch,
                format!("manifest {}s file {actual}s", audio.duration_s),
            );
        }
    }
    for seg in &audio.segments {
        if seg.end_time > audio.duration_s + 1e-9 || seg.begin_time < -1e-9 {
            return (VerifyStatus::SegmentOutOfBounds, seg.sid.clone());
        }
    }
    (VerifyStatus::Ok, String::new())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Deterministic random manifest for round-trip and partition tests.
    pub fn random_manifest(seed: u64, n_audios: usize) -> Manifest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut audios = Vec::new();
        for a in 0..n_audios {
            let n_segs = rng.gen_range(0..6);
            let mut t = 0.0f64;
            let mut segments = Vec::new();
            for s in 0..n_segs {
                let begin = t + rng.gen_range(0.05..2.0);
                let end = begin + rng.gen_range(0.5..19.0);
                t = end;
                segments.push(SegmentRecord {
                    sid: format!("AUD{a:07}_S{s:04}"),
                    begin_time: round_ms(begin),
                    end_time: round_ms(end),
                    text_tn: "SOME WORDS HERE <PERIOD>".to_string(),
                    text_raw: "Some words here.".to_string(),
                    wer_estimate: round_ms(rng.gen_range(0.0..10.0)),
                    wer_estimate_rewritten: None,
                    subsets: vec![],
                });
            }
            let source = Source::ALL[rng.gen_range(0..3)];
            let category = if rng.gen_bool(0.2) {
                "N/A".to_string()
            } else {
                CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string()
            };
            audios.push(AudioDoc {
                aid: format!("AUD{a:07}"),
                title: format!("Document {a}"),
                url: format!("https://example.com/{a}"),
                path: format!("audio/AUD{a:07}.wav"),
                duration_s: round_ms(t + rng.gen_range(0.1..5.0)),
                format: "wav".to_string(),
                source,
                category,
                md5: format!("{:032x}", rng.gen::<u128>()),
                subsets: vec![],
                segments,
            });
        }
        Manifest {
            dataset: "testcorpus".to_string(),
            language: "EN".to_string(),
            version: "v1.0.0".to_string(),
            audios,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::random_manifest;
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let m = random_manifest(3, 8);
        let bytes = save_manifest(&m);
        let loaded = load_manifest(&bytes).unwrap();
        assert_eq!(m, loaded);
        assert_eq!(bytes, save_manifest(&loaded), "serialization must be stable");
    }

    #[test]
    fn parse_schema_invariant_errors_are_distinct() {
        assert!(matches!(load_manifest(b"{nope"), Err(ManifestError::Parse(_))));
        assert!(matches!(
            load_manifest(br#"{"dataset":"d","language":"EN"}"#),
            Err(ManifestError::Schema(_))
        ));
        let mut m = random_manifest(5, 2);
        m.version = String::new();
        assert!(matches!(
            load_manifest(&save_manifest(&m)),
            Err(ManifestError::Invariant(_))
        ));
    }

    #[test]
    fn bad_enum_is_a_schema_error() {
        let m = random_manifest(7, 1);
        let mut v = serde_json::to_value(&m).unwrap();
        v["audios"][0]["source"] = serde_json::json!("radio");
        let bytes = serde_json::to_vec(&v).unwrap();
        assert!(matches!(load_manifest(&bytes), Err(ManifestError::Schema(_))));
    }

    #[test]
    fn unknown_category_is_rejected() {
        let mut m = random_manifest(9, 1);
        m.audios[0].category = "Cooking".to_string();
        assert!(matches!(
            load_manifest(&save_manifest(&m)),
            Err(ManifestError::Invariant(_))
        ));
    }

    #[test]
    fn overlapping_segments_are_rejected() {
        let mut m = random_manifest(11, 1);
        while m.audios[0].segments.len() < 2 {
            m = random_manifest(m.audios[0].segments.len() as u64 + 20, 1);
        }
        m.audios[0].segments[1].begin_time = m.audios[0].segments[0].begin_time;
        assert!(m.validate().is_err());
    }

    #[test]
    fn times_serialize_at_millisecond_precision() {
        let mut m = random_manifest(13, 1);
        m.audios[0].duration_s = 1.23456789;
        let bytes = save_manifest(&m);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.contains("1.235"), "rounded duration missing:\n{text}");
        assert!(!text.contains("1.23456789"));
    }

    #[test]
    fn verify_reports_checksum_and_duration() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = random_manifest(17, 1);
        m.audios[0].segments.clear();
        m.audios[0].subsets.clear();
        m.audios[0].path = "doc.wav".to_string();

        // 1 second of 8 kHz mono 16-bit PCM silence.
        let byte_rate: u32 = 16000;
        let data = vec![0u8; byte_rate as usize];
        let mut wav = Vec::new();
        wav.extend(b"RIFF");
        wav.extend(&(36 + data.len() as u32).to_le_bytes());
        wav.extend(b"WAVE");
        wav.extend(b"fmt ");
        wav.extend(&16u32.to_le_bytes());
        wav.extend(&1u16.to_le_bytes());
        wav.extend(&1u16.to_le_bytes());
        wav.extend(&8000u32.to_le_bytes());
        wav.extend(&byte_rate.to_le_bytes());
        wav.extend(&2u16.to_le_bytes());
        wav.extend(&16u16.to_le_bytes());
        wav.extend(b"data");
        wav.extend(&(data.len() as u32).to_le_bytes());
        wav.extend(&data);
        std::fs::write(dir.path().join("doc.wav"), &wav).unwrap();

        m.audios[0].md5 = format!("{:x}", Md5::digest(&wav));
        m.audios[0].duration_s = 1.0;
        assert!(verify_manifest(&m, dir.path()).ok);

        m.audios[0].duration_s = 2.0;
        let report = verify_manifest(&m, dir.path());
        assert_eq!(report.entries[0].status, VerifyStatus::DurationMismatch);

        m.audios[0].duration_s = 1.0;
        m.audios[0].md5 = "0".repeat(32);
        let report = verify_manifest(&m, dir.path());
        assert_eq!(report.entries[0].status, VerifyStatus::ChecksumMismatch);

        m.audios[0].path = "gone.wav".to_string();
        let report = verify_manifest(&m, dir.path());
        assert_eq!(report.entries[0].status, VerifyStatus::MissingFile);
    }
}
