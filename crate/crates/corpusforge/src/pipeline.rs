//! End-to-end orchestration: documents flow through normalization, chunk
//! matching, alignment, segmentation, graph building, validation, and
//! evaluation. Every stage's output is dumped as JSON lines keyed by
//! document id, so any slice of the pipeline can be rerun on its own and
//! produce the same bytes the full run would have written.
//!
//! Documents are independent: workers run the per-document stages in
//! parallel and the results are merged in aid order, so a run is
//! reproducible at any parallelism degree. A document failing at some
//! stage carries its failure forward instead of aborting the run.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use md5::{Digest, Md5};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align_graph::{build_graph, AlignGraph, FillerSet, GarbageVocab, GraphWeights};
use crate::chunk_match::{
    chunk_hypothesis, chunk_transcript, match_chunks, Chunk, ChunkMatch, TimedWord,
};
use crate::evaluator::{
    frame_labels, pr_curve, tally, DocEval, PrCounts, PrPoint, SegmentWords, FRAME_RATE,
};
use crate::metadata::partition::{partition_subsets, PartitionSpec, SubsetCap};
use crate::metadata::{round_ms, save_manifest, AudioDoc, Manifest, SegmentRecord, CATEGORIES};
use crate::segmenter::{segment_document_counted, CandidateSegment, SegmentDrops, SegmenterConfig};
use crate::sw_align::{
    align_chunk_pair, mark_silences, stitch, ChunkAlignment, Scoring, SIL_GAP_THRESH_S,
};
use crate::synth::{generate, make_scorer, SegmentScorer, SynthDoc, SynthSpec};
use crate::textnorm::{normalize_text, TokenSeq, PUNCT_WORDS};
use crate::validator::{
    validate_segment, RewritePolicy, ValidateOptions, ValidationResult, DEFAULT_BEAM,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub hyp_window_s: f64,
    pub hyp_overlap_s: f64,
    pub ref_chunk_words: usize,
    pub ref_overlap_words: usize,
    pub match_threshold: f64,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            hyp_window_s: 30.0,
            hyp_overlap_s: 10.0,
            ref_chunk_words: 60,
            ref_overlap_words: 20,
            match_threshold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub order_n: u32,
    pub weights: GraphWeights,
    pub return_window: u32,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { order_n: 4, weights: GraphWeights::default(), return_window: 10 }
    }
}

/// Admission rule for one training subset: the WER ceiling and whether the
/// reference-rewriting passes run for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapPolicy {
    pub cap: f64,
    pub fillers: bool,
    pub disfluency: bool,
}

impl CapPolicy {
    /// The stock policy: the largest subset tolerates 4% with rewriting on,
    /// every smaller subset requires a clean 0%.
    pub fn for_subset(name: &str) -> CapPolicy {
        if name == "XL" {
            CapPolicy { cap: 4.0, fillers: true, disfluency: true }
        } else {
            CapPolicy { cap: 0.0, fillers: false, disfluency: false }
        }
    }

    pub fn rewriting(&self) -> bool {
        self.fillers || self.disfluency
    }
}

pub fn default_caps() -> BTreeMap<String, CapPolicy> {
    ["XL", "L", "M", "S", "XS"]
        .iter()
        .map(|&n| (n.to_string(), CapPolicy::for_subset(n)))
        .collect()
}

/// Where the documents come from: generated on the fly, or loaded from a
/// JSON-lines dump written by the `synth` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusInput {
    Synth { spec: SynthSpec },
    Docs { path: PathBuf },
}

impl Default for CorpusInput {
    fn default() -> Self {
        CorpusInput::Synth { spec: SynthSpec::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: String,
    pub language: String,
    pub version: String,
    pub input: CorpusInput,
    pub output_dir: PathBuf,
    /// Worker count; 0 means one worker per core. The CORPUSFORGE_JOBS
    /// environment variable overrides this.
    pub jobs: usize,
    pub chunking: ChunkingConfig,
    pub scoring: Scoring,
    pub segmenter: SegmenterConfig,
    pub graph: GraphConfig,
    pub scorer_noise: f64,
    pub scorer_seed: u64,
    pub beam: usize,
    /// Subset name -> admission policy. Validation always runs the strict
    /// pass; the rewriting pass runs when any subset wants it.
    pub caps: BTreeMap<String, CapPolicy>,
    /// WER caps swept for the report's precision/recall curve.
    pub eval_caps: Vec<f64>,
    pub partition: Option<PartitionSpec>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: "CorpusForge".to_string(),
            language: "EN".to_string(),
            version: "1.0.0".to_string(),
            input: CorpusInput::default(),
            output_dir: PathBuf::from("out"),
            jobs: 0,
            chunking: ChunkingConfig::default(),
            scoring: Scoring::default(),
            segmenter: SegmenterConfig::default(),
            graph: GraphConfig::default(),
            scorer_noise: 0.1,
            scorer_seed: 17,
            beam: DEFAULT_BEAM,
            caps: default_caps(),
            eval_caps: vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0],
            partition: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        let c = &self.chunking;
        if !(c.hyp_window_s > 0.0 && c.hyp_overlap_s >= 0.0 && c.hyp_window_s > c.hyp_overlap_s) {
            return Err("hypothesis chunk window must exceed its overlap".to_string());
        }
        if c.ref_chunk_words <= c.ref_overlap_words {
            return Err("reference chunk size must exceed its overlap".to_string());
        }
        if !(c.match_threshold >= 0.0 && c.match_threshold.is_finite()) {
            return Err("match threshold must be a finite non-negative number".to_string());
        }
        if self.graph.order_n < 2 {
            return Err("graph order must be at least 2".to_string());
        }
        if self.beam == 0 {
            return Err("beam must be positive".to_string());
        }
        if !(self.scorer_noise >= 0.0 && self.scorer_noise.is_finite()) {
            return Err("scorer noise must be a finite non-negative number".to_string());
        }
        if self.caps.is_empty() {
            return Err("at least one subset cap policy is required".to_string());
        }
        for (name, p) in &self.caps {
            if !(p.cap >= 0.0 && p.cap.is_finite()) {
                return Err(format!("subset {name}: cap must be a finite non-negative number"));
            }
        }
        if self.eval_caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err("eval caps must be finite non-negative numbers".to_string());
        }
        if let CorpusInput::Synth { spec } = &self.input {
            spec.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl PipelineError {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// IO problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Io(_) => 3,
        }
    }
}

pub fn load_config(path: &Path) -> Result<PipelineConfig, PipelineError> {
    let bytes = fs::read(path).map_err(|e| with_path(e, path))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Normalize,
    Match,
    Align,
    Segment,
    Graph,
    Validate,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Normalize,
        Stage::Match,
        Stage::Align,
        Stage::Segment,
        Stage::Graph,
        Stage::Validate,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Normalize => "normalize",
            Stage::Match => "match",
            Stage::Align => "align",
            Stage::Segment => "segment",
            Stage::Graph => "graph",
            Stage::Validate => "validate",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown stage {0:?}; expected normalize, match, align, segment, graph, validate, or evaluate")]
pub struct UnknownStageError(pub String);

impl FromStr for Stage {
    type Err = UnknownStageError;

    fn from_str(s: &str) -> Result<Stage, UnknownStageError> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| UnknownStageError(s.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchSet {
    pub hyp_chunks: Vec<Chunk>,
    pub ref_chunks: Vec<Chunk>,
    pub matches: Vec<ChunkMatch>,
}

/// One candidate segment with its aligned word times (absolute document
/// seconds), carried from the segment stage onward.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentBundle {
    pub sid: String,
    pub seg: CandidateSegment,
    pub words: Vec<TimedWord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentValidation {
    pub sid: String,
    pub strict: ValidationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewritten: Option<ValidationResult>,
}

/// Per-document pipeline state, one JSON line per document in each stage
/// dump. Stages fill their own field and leave the rest untouched; a
/// failed document keeps its partial state plus the failure note.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocRecord {
    pub aid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_seq: Option<TokenSeq>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches: Option<MatchSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<crate::sw_align::TimedTranscript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<SegmentBundle>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drops: Option<SegmentDrops>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graphs: Option<Vec<AlignGraph>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validations: Option<Vec<SegmentValidation>>,
}

impl DocRecord {
    fn new(aid: &str) -> DocRecord {
        DocRecord {
            aid: aid.to_string(),
            failure: None,
            ref_seq: None,
            matches: None,
            transcript: None,
            segments: None,
            drops: None,
            graphs: None,
            validations: None,
        }
    }
}

fn fail(mut rec: DocRecord, stage: Stage, message: impl Into<String>) -> DocRecord {
    rec.failure = Some(StageFailure { stage: stage.name().to_string(), message: message.into() });
    rec
}

/// Loads (or generates) the corpus, sorted by aid.
pub fn load_corpus(cfg: &PipelineConfig) -> Result<Vec<SynthDoc>, PipelineError> {
    let mut docs = match &cfg.input {
        CorpusInput::Synth { spec } => {
            generate(spec).map_err(|e| PipelineError::Config(e.to_string()))?
        }
        CorpusInput::Docs { path } => read_jsonl(path)?,
    };
    docs.sort_by(|a, b| a.aid.cmp(&b.aid));
    for w in docs.windows(2) {
        if w[0].aid == w[1].aid {
            return Err(PipelineError::Config(format!("duplicate document id {:?}", w[0].aid)));
        }
    }
    Ok(docs)
}

fn doc_index(corpus: &[SynthDoc]) -> BTreeMap<String, SynthDoc> {
    corpus.iter().map(|d| (d.aid.clone(), d.clone())).collect()
}

pub fn normalize_records(corpus: &[SynthDoc]) -> Vec<DocRecord> {
    let mut recs: Vec<DocRecord> = corpus
        .par_iter()
        .map(|doc| {
            let mut rec = DocRecord::new(&doc.aid);
            rec.ref_seq = Some(normalize_text(&doc.transcript_raw));
            rec
        })
        .collect();
    recs.sort_by(|a, b| a.aid.cmp(&b.aid));
    recs
}

/// Aligns every matched chunk pair of one document.
pub fn chunk_alignments(
    cfg: &PipelineConfig,
    doc: &SynthDoc,
    ref_seq: &TokenSeq,
    ms: &MatchSet,
) -> Vec<ChunkAlignment> {
    let hyp = doc.hypothesis();
    let marked = mark_silences(&hyp, SIL_GAP_THRESH_S);
    ms.matches
        .iter()
        .map(|m| {
            align_chunk_pair(
                &marked,
                ref_seq,
                &ms.hyp_chunks[m.hyp_chunk],
                &ms.ref_chunks[m.ref_chunk],
                m,
                cfg.scoring,
            )
        })
        .collect()
}

fn map_match(cfg: &PipelineConfig, docs: &BTreeMap<String, SynthDoc>, rec: DocRecord) -> DocRecord {
    if rec.failure.is_some() {
        return rec;
    }
    let Some(doc) = docs.get(&rec.aid) else {
        return fail(rec, Stage::Match, "document missing from corpus input");
    };
    let Some(ref_seq) = rec.ref_seq.as_ref() else {
        return fail(rec, Stage::Match, "missing normalized reference");
    };
    let hyp = doc.hypothesis();
    let hyp_chunks = chunk_hypothesis(&hyp, cfg.chunking.hyp_window_s, cfg.chunking.hyp_overlap_s);
    let ref_chunks =
        chunk_transcript(ref_seq, cfg.chunking.ref_chunk_words, cfg.chunking.ref_overlap_words);
    let matches =
        match_chunks(&hyp, &hyp_chunks, ref_seq, &ref_chunks, cfg.chunking.match_threshold);
    let ms = MatchSet { hyp_chunks, ref_chunks, matches };
    let mut rec = rec;
    rec.matches = Some(ms);
    rec
}

fn map_align(cfg: &PipelineConfig, docs: &BTreeMap<String, SynthDoc>, rec: DocRecord) -> DocRecord {
    if rec.failure.is_some() {
        return rec;
    }
    let Some(doc) = docs.get(&rec.aid) else {
        return fail(rec, Stage::Align, "document missing from corpus input");
    };
    let (Some(ref_seq), Some(ms)) = (rec.ref_seq.as_ref(), rec.matches.as_ref()) else {
        return fail(rec, Stage::Align, "missing chunk matches");
    };
    let alignments = chunk_alignments(cfg, doc, ref_seq, ms);
    match stitch(&alignments, ref_seq, &doc.hypothesis()) {
        Ok(tt) => {
            let mut rec = rec;
            rec.transcript = Some(tt);
            rec
        }
        Err(e) => fail(rec, Stage::Align, e.to_string()),
    }
}

fn map_segment(cfg: &PipelineConfig, rec: DocRecord) -> DocRecord {
    if rec.failure.is_some() {
        return rec;
    }
    let Some(tt) = rec.transcript.as_ref() else {
        return fail(rec, Stage::Segment, "missing timed transcript");
    };
    let (segs, drops) = segment_document_counted(tt, &cfg.segmenter);
    let bundles: Vec<SegmentBundle> = segs
        .into_iter()
        .enumerate()
        .map(|(i, seg)| {
            let lo = tt.word_tokens.partition_point(|&t| t < seg.token_range.0);
            let hi = tt.word_tokens.partition_point(|&t| t < seg.token_range.1);
            let words = (lo..hi)
                .filter_map(|w| {
                    tt.word_times[w].map(|(b, e)| TimedWord {
                        text: tt.ref_seq.tokens[tt.word_tokens[w]].text.clone(),
                        begin_s: b,
                        end_s: e,
                    })
                })
                .collect();
            SegmentBundle { sid: format!("{}_S{:04}", rec.aid, i), seg, words }
        })
        .collect();
    let mut rec = rec;
    rec.segments = Some(bundles);
    rec.drops = Some(drops);
    rec
}

/// Garbage-loop vocabulary for the whole corpus: unigram counts over every
/// successfully normalized reference.
pub fn garbage_vocab(records: &[DocRecord]) -> GarbageVocab {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for rec in records {
        if let Some(seq) = &rec.ref_seq {
            for tok in &seq.tokens {
                if tok.is_word() {
                    *counts.entry(tok.text.clone()).or_insert(0) += 1;
                }
            }
        }
    }
    GarbageVocab::top_unigrams(&counts, &FillerSet::default())
}

fn map_graph(
    cfg: &PipelineConfig,
    garbage: &GarbageVocab,
    fillers: &FillerSet,
    rec: DocRecord,
) -> DocRecord {
    if rec.failure.is_some() {
        return rec;
    }
    let Some(bundles) = rec.segments.as_ref() else {
        return fail(rec, Stage::Graph, "missing segments");
    };
    let graphs: Result<Vec<AlignGraph>, _> = bundles
        .iter()
        .map(|b| {
            build_graph(
                &b.seg.tokens,
                cfg.graph.order_n,
                &cfg.graph.weights,
                garbage,
                fillers,
                cfg.graph.return_window,
            )
        })
        .collect();
    match graphs {
        Ok(gs) => {
            let mut rec = rec;
            rec.graphs = Some(gs);
            rec
        }
        Err(e) => fail(rec, Stage::Graph, e.to_string()),
    }
}

/// The two validation passes derived from the subset policies: the strict
/// pass always runs (its WER feeds every non-rewriting subset), and one
/// rewriting pass runs when any subset asks for it, with the union of the
/// requested rewrites and the loosest of their caps.
#[derive(Debug, Clone)]
pub struct PolicyPair {
    pub strict: ValidateOptions,
    pub lenient: Option<ValidateOptions>,
}

pub fn policy_pair(cfg: &PipelineConfig) -> PolicyPair {
    let mut strict_cap: Option<f64> = None;
    let mut lenient: Option<(f64, bool, bool)> = None;
    for p in cfg.caps.values() {
        if p.rewriting() {
            let e = lenient.get_or_insert((p.cap, false, false));
            e.0 = e.0.max(p.cap);
            e.1 |= p.fillers;
            e.2 |= p.disfluency;
        } else {
            strict_cap = Some(strict_cap.map_or(p.cap, |c: f64| c.min(p.cap)));
        }
    }
    PolicyPair {
        strict: ValidateOptions {
            cap: strict_cap.unwrap_or(0.0),
            cap_exclusive: false,
            policy: RewritePolicy::STRICT,
            beam: cfg.beam,
        },
        lenient: lenient.map(|(cap, fillers, disfluency)| ValidateOptions {
            cap,
            cap_exclusive: false,
            policy: RewritePolicy { fillers, disfluency },
            beam: cfg.beam,
        }),
    }
}

fn map_validate(
    cfg: &PipelineConfig,
    docs: &BTreeMap<String, SynthDoc>,
    pol: &PolicyPair,
    rec: DocRecord,
) -> DocRecord {
    if rec.failure.is_some() {
        return rec;
    }
    let Some(doc) = docs.get(&rec.aid) else {
        return fail(rec, Stage::Validate, "document missing from corpus input");
    };
    let (Some(bundles), Some(graphs)) = (rec.segments.as_ref(), rec.graphs.as_ref()) else {
        return fail(rec, Stage::Validate, "missing graphs");
    };
    if bundles.len() != graphs.len() {
        return fail(rec, Stage::Validate, "graph count does not match segment count");
    }
    let scorer = make_scorer(doc, cfg.scorer_noise, cfg.scorer_seed);
    let validations: Vec<SegmentValidation> = bundles
        .iter()
        .zip(graphs)
        .map(|(b, g)| {
            let win = SegmentScorer::new(&scorer, b.seg.begin_s, b.seg.end_s);
            let strict = validate_segment(&b.sid, &b.seg, &win, g, &pol.strict);
            let rewritten =
                pol.lenient.as_ref().map(|o| validate_segment(&b.sid, &b.seg, &win, g, o));
            SegmentValidation { sid: b.sid.clone(), strict, rewritten }
        })
        .collect();
    let mut rec = rec;
    rec.validations = Some(validations);
    rec
}

fn par_map<F>(records: Vec<DocRecord>, f: F) -> Vec<DocRecord>
where
    F: Fn(DocRecord) -> DocRecord + Send + Sync,
{
    let mut out: Vec<DocRecord> = records.into_par_iter().map(f).collect();
    out.sort_by(|a, b| a.aid.cmp(&b.aid));
    out
}

/// Applies one of the per-document stages (match through validate) to a
/// record set, in parallel, merging in aid order.
pub fn stage_records(
    cfg: &PipelineConfig,
    docs: &BTreeMap<String, SynthDoc>,
    stage: Stage,
    records: Vec<DocRecord>,
) -> Vec<DocRecord> {
    match stage {
        Stage::Match => par_map(records, |r| map_match(cfg, docs, r)),
        Stage::Align => par_map(records, |r| map_align(cfg, docs, r)),
        Stage::Segment => par_map(records, |r| map_segment(cfg, r)),
        Stage::Graph => {
            let garbage = garbage_vocab(&records);
            let fillers = FillerSet::default();
            par_map(records, |r| map_graph(cfg, &garbage, &fillers, r))
        }
        Stage::Validate => {
            let pol = policy_pair(cfg);
            par_map(records, |r| map_validate(cfg, docs, &pol, r))
        }
        Stage::Normalize | Stage::Evaluate => {
            unreachable!("normalize and evaluate do not map records; handled by the caller")
        }
    }
}

/// Runs one validation pass with explicit options over a graph-stage record
/// set, returning the flat result list in aid order.
pub fn validate_with_options(
    cfg: &PipelineConfig,
    docs: &BTreeMap<String, SynthDoc>,
    records: &[DocRecord],
    opts: &ValidateOptions,
) -> Vec<ValidationResult> {
    let per_doc: Vec<Vec<ValidationResult>> = records
        .par_iter()
        .map(|rec| {
            let (Some(doc), Some(bundles), Some(graphs), None) =
                (docs.get(&rec.aid), rec.segments.as_ref(), rec.graphs.as_ref(), rec.failure.as_ref())
            else {
                return Vec::new();
            };
            let scorer = make_scorer(doc, cfg.scorer_noise, cfg.scorer_seed);
            bundles
                .iter()
                .zip(graphs)
                .map(|(b, g)| {
                    let win = SegmentScorer::new(&scorer, b.seg.begin_s, b.seg.end_s);
                    validate_segment(&b.sid, &b.seg, &win, g, opts)
                })
                .collect()
        })
        .collect();
    per_doc.into_iter().flatten().collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocFailure {
    pub aid: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassFail {
    pub pass: usize,
    pub fail: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrReport {
    pub precision: f64,
    pub recall: f64,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub docs: usize,
    pub docs_failed: usize,
    pub failures: Vec<DocFailure>,
    pub candidate_segments: usize,
    pub drops: SegmentDrops,
    /// Segments where the strict decoding found no path at all.
    pub decode_failures: usize,
    /// Pass/fail tallies per subset policy over all candidate segments.
    pub pass_fail: BTreeMap<String, PassFail>,
    pub kept_segments: usize,
    pub kept_hours: f64,
    /// Frame-level scores against the gold labeling, when one exists.
    pub pr: Option<PrReport>,
}

fn md5_hex(bytes: &[u8]) -> String {
    format!("{:x}", Md5::digest(bytes))
}

fn raw_slice(raw: &str, tokens: &TokenSeq) -> String {
    match tokens.raw_span(0, tokens.len()) {
        Some((a, b)) => raw.get(a..b).unwrap_or("").to_string(),
        None => String::new(),
    }
}

/// The manifest shell for one document; segment lists are filled in by the
/// caller. Synthetic documents have no real media file, so the checksum
/// covers the transcript bytes instead.
fn audio_shell(doc: &SynthDoc, index: usize) -> AudioDoc {
    AudioDoc {
        aid: doc.aid.clone(),
        title: format!("Synthetic document {}", doc.aid),
        url: format!("synth://{}", doc.aid),
        path: format!("audio/{}/{}.opus", doc.source.name(), doc.aid),
        duration_s: round_ms(doc.audio_duration_s),
        format: "opus".to_string(),
        source: doc.source,
        category: CATEGORIES[index % CATEGORIES.len()].to_string(),
        md5: md5_hex(doc.transcript_raw.as_bytes()),
        subsets: Vec::new(),
        segments: Vec::new(),
    }
}

fn gold_segments(doc: &SynthDoc) -> Vec<SegmentWords> {
    doc.human_segments
        .iter()
        .map(|hs| SegmentWords {
            begin_s: hs.begin_s,
            end_s: hs.end_s,
            words: doc
                .true_spoken
                .iter()
                .filter(|w| w.midpoint_s() >= hs.begin_s && w.midpoint_s() <= hs.end_s)
                .cloned()
                .collect(),
        })
        .collect()
}

/// The ground-truth manifest for a synthetic corpus: one segment per
/// spoken sentence, zero WER.
pub fn gold_manifest(docs: &[SynthDoc], cfg: &PipelineConfig) -> Manifest {
    let audios = docs
        .iter()
        .enumerate()
        .map(|(index, doc)| {
            let mut audio = audio_shell(doc, index);
            audio.segments = gold_segments(doc)
                .iter()
                .enumerate()
                .map(|(i, sw)| {
                    let text: Vec<&str> = sw.words.iter().map(|w| w.text.as_str()).collect();
                    SegmentRecord {
                        sid: format!("{}_G{:04}", doc.aid, i),
                        begin_time: round_ms(sw.begin_s),
                        end_time: round_ms(sw.end_s),
                        text_tn: text.join(" "),
                        text_raw: text.join(" "),
                        wer_estimate: 0.0,
                        wer_estimate_rewritten: None,
                        subsets: Vec::new(),
                    }
                })
                .collect();
            audio
        })
        .collect();
    Manifest {
        dataset: format!("{}-gold", cfg.dataset),
        language: cfg.language.clone(),
        version: cfg.version.clone(),
        audios,
    }
}

fn partition_spec(cfg: &PipelineConfig) -> Option<PartitionSpec> {
    let mut spec = cfg.partition.clone()?;
    if spec.caps.is_empty() {
        spec.caps = cfg
            .caps
            .iter()
            .map(|(name, p)| {
                (name.clone(), SubsetCap { cap: p.cap, use_rewritten: p.rewriting() })
            })
            .collect();
    }
    Some(spec)
}

/// Folds validated records into the manifest and the run report: a segment
/// is kept when it passes at least one subset policy, and the frame-level
/// scores compare the kept set against the synthetic ground truth.
pub fn finalize(
    cfg: &PipelineConfig,
    docs: &BTreeMap<String, SynthDoc>,
    records: &[DocRecord],
) -> Result<(Manifest, PipelineReport), PipelineError> {
    let mut failures = Vec::new();
    let mut candidate_segments = 0usize;
    let mut drops = SegmentDrops::default();
    let mut decode_failures = 0usize;
    let mut pass_fail: BTreeMap<String, PassFail> =
        cfg.caps.keys().map(|k| (k.clone(), PassFail::default())).collect();
    let mut agg = PrCounts::default();
    let mut evals: Vec<DocEval> = Vec::new();
    let mut audios: Vec<AudioDoc> = Vec::new();

    for (index, rec) in records.iter().enumerate() {
        if let Some(f) = &rec.failure {
            failures.push(DocFailure {
                aid: rec.aid.clone(),
                stage: f.stage.clone(),
                message: f.message.clone(),
            });
            continue;
        }
        let Some(doc) = docs.get(&rec.aid) else {
            failures.push(DocFailure {
                aid: rec.aid.clone(),
                stage: Stage::Evaluate.name().to_string(),
                message: "document missing from corpus input".to_string(),
            });
            continue;
        };
        let (Some(bundles), Some(validations)) =
            (rec.segments.as_ref(), rec.validations.as_ref())
        else {
            failures.push(DocFailure {
                aid: rec.aid.clone(),
                stage: Stage::Evaluate.name().to_string(),
                message: "missing validation results".to_string(),
            });
            continue;
        };
        if let Some(d) = &rec.drops {
            drops += *d;
        }
        candidate_segments += bundles.len();

        let total_frames = (doc.audio_duration_s * FRAME_RATE as f64).round() as u32;
        let gold = gold_segments(doc);

        let mut audio = audio_shell(doc, index);
        let mut kept: Vec<SegmentWords> = Vec::new();
        let mut scored: Vec<(f64, SegmentWords)> = Vec::new();
        for (b, v) in bundles.iter().zip(validations) {
            let strict_wer = v.strict.wer;
            if strict_wer.is_none() {
                decode_failures += 1;
            }
            let rewritten_wer = v.rewritten.as_ref().and_then(|r| r.wer);
            let sw = SegmentWords {
                begin_s: b.seg.begin_s,
                end_s: b.seg.end_s,
                words: b.words.clone(),
            };
            scored.push((strict_wer.unwrap_or(f64::INFINITY), sw.clone()));

            let mut keep = false;
            for (name, pol) in &cfg.caps {
                let wer = if pol.rewriting() { rewritten_wer } else { strict_wer };
                let pass = wer.is_some_and(|w| w <= pol.cap + 1e-9);
                let entry = pass_fail.get_mut(name).expect("tallies cover every subset");
                if pass {
                    entry.pass += 1;
                } else {
                    entry.fail += 1;
                }
                keep |= pass;
            }
            if keep && strict_wer.is_some() {
                kept.push(sw);
                audio.segments.push(SegmentRecord {
                    sid: b.sid.clone(),
                    begin_time: round_ms(b.seg.begin_s),
                    end_time: round_ms(b.seg.end_s),
                    text_tn: b.seg.tokens.render(),
                    text_raw: raw_slice(&doc.transcript_raw, &b.seg.tokens),
                    wer_estimate: strict_wer.expect("kept segments decoded"),
                    wer_estimate_rewritten: rewritten_wer,
                    subsets: Vec::new(),
                });
            }
        }

        let gold_lab = frame_labels(&gold, total_frames).map_err(|e| {
            PipelineError::Config(format!("{}: ground-truth segments overlap: {e}", rec.aid))
        })?;
        let kept_lab = frame_labels(&kept, total_frames)
            .expect("segmenter output is disjoint, so its frame spans are too");
        agg += tally(&kept_lab, &gold_lab).expect("labelings share the frame count");
        evals.push(DocEval { total_frames, human: gold, scored });
        audios.push(audio);
    }

    let mut manifest = Manifest {
        dataset: cfg.dataset.clone(),
        language: cfg.language.clone(),
        version: cfg.version.clone(),
        audios,
    };
    if let Some(spec) = partition_spec(cfg) {
        manifest =
            partition_subsets(&manifest, &spec).map_err(|e| PipelineError::Config(e.to_string()))?;
    }

    let pr = if agg.human_speech == 0 {
        None
    } else {
        let mut caps = cfg.eval_caps.clone();
        caps.sort_by(f64::total_cmp);
        caps.dedup();
        let curve = pr_curve(&evals, &caps)
            .map_err(|e| PipelineError::Config(format!("evaluation failed: {e}")))?;
        Some(PrReport {
            precision: agg.precision(),
            recall: agg.recall().expect("human speech frames were counted"),
            curve,
        })
    };

    let kept_segments = manifest.audios.iter().map(|a| a.segments.len()).sum();
    let report = PipelineReport {
        docs: records.len(),
        docs_failed: failures.len(),
        failures,
        candidate_segments,
        drops,
        decode_failures,
        pass_fail,
        kept_segments,
        kept_hours: manifest.segment_hours(),
        pr,
    };
    Ok((manifest, report))
}

fn with_path(e: io::Error, path: &Path) -> PipelineError {
    PipelineError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = fs::File::open(path).map_err(|e| with_path(e, path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| with_path(e, path))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            PipelineError::Io(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{} line {}: {e}", path.display(), n + 1),
            ))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let file = fs::File::create(path).map_err(|e| with_path(e, path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

#[derive(Serialize)]
struct FinalDump<'a> {
    manifest: &'a Manifest,
    report: &'a PipelineReport,
}

fn final_bytes(manifest: &Manifest, report: &PipelineReport) -> Vec<u8> {
    to_pretty(&FinalDump { manifest, report })
}

fn thread_pool(cfg: &PipelineConfig) -> Result<Option<rayon::ThreadPool>, PipelineError> {
    let jobs = match std::env::var("CORPUSFORGE_JOBS") {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            PipelineError::Config(format!("CORPUSFORGE_JOBS must be an integer, got {v:?}"))
        })?,
        Err(_) => cfg.jobs,
    };
    if jobs == 0 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map(Some)
        .map_err(|e| PipelineError::Config(e.to_string()))
}

/// Runs the whole pipeline: per-stage dumps land in the configured output
/// directory alongside `manifest.json`, `report.json`, and their combined
/// `final.json`.
pub fn run(cfg: &PipelineConfig) -> Result<(Manifest, PipelineReport), PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    match thread_pool(cfg)? {
        Some(pool) => pool.install(|| run_inner(cfg)),
        None => run_inner(cfg),
    }
}

fn run_inner(cfg: &PipelineConfig) -> Result<(Manifest, PipelineReport), PipelineError> {
    let corpus = load_corpus(cfg)?;
    let docs = doc_index(&corpus);
    fs::create_dir_all(&cfg.output_dir).map_err(|e| with_path(e, &cfg.output_dir))?;

    let mut records = normalize_records(&corpus);
    write_jsonl(&cfg.output_dir.join("normalize.jsonl"), &records)?;
    for stage in [Stage::Match, Stage::Align, Stage::Segment, Stage::Graph, Stage::Validate] {
        records = stage_records(cfg, &docs, stage, records);
        write_jsonl(&cfg.output_dir.join(format!("{}.jsonl", stage.name())), &records)?;
    }

    let (manifest, report) = finalize(cfg, &docs, &records)?;
    fs::write(cfg.output_dir.join("manifest.json"), save_manifest(&manifest))
        .map_err(|e| with_path(e, &cfg.output_dir))?;
    fs::write(cfg.output_dir.join("report.json"), to_pretty(&report))
        .map_err(|e| with_path(e, &cfg.output_dir))?;
    fs::write(cfg.output_dir.join("final.json"), final_bytes(&manifest, &report))
        .map_err(|e| with_path(e, &cfg.output_dir))?;
    Ok((manifest, report))
}

/// Runs exactly one stage on dumped intermediates. With the same config,
/// chaining the stages writes the same bytes the full run would.
pub fn run_stage(
    cfg: &PipelineConfig,
    stage: Stage,
    in_path: &Path,
    out_path: &Path,
) -> Result<(), PipelineError> {
    cfg.validate().map_err(PipelineError::Config)?;
    match thread_pool(cfg)? {
        Some(pool) => pool.install(|| run_stage_inner(cfg, stage, in_path, out_path)),
        None => run_stage_inner(cfg, stage, in_path, out_path),
    }
}

fn run_stage_inner(
    cfg: &PipelineConfig,
    stage: Stage,
    in_path: &Path,
    out_path: &Path,
) -> Result<(), PipelineError> {
    match stage {
        Stage::Normalize => {
            let mut corpus: Vec<SynthDoc> = read_jsonl(in_path)?;
            corpus.sort_by(|a, b| a.aid.cmp(&b.aid));
            let records = normalize_records(&corpus);
            write_jsonl(out_path, &records)
        }
        Stage::Match | Stage::Align | Stage::Segment | Stage::Graph | Stage::Validate => {
            let corpus = load_corpus(cfg)?;
            let docs = doc_index(&corpus);
            let records: Vec<DocRecord> = read_jsonl(in_path)?;
            let records = stage_records(cfg, &docs, stage, records);
            write_jsonl(out_path, &records)
        }
        Stage::Evaluate => {
            let corpus = load_corpus(cfg)?;
            let docs = doc_index(&corpus);
            let records: Vec<DocRecord> = read_jsonl(in_path)?;
            let (manifest, report) = finalize(cfg, &docs, &records)?;
            fs::write(out_path, final_bytes(&manifest, &report)).map_err(|e| with_path(e, out_path))
        }
    }
}

/// Frame evaluations for a manifest pair. Manifests carry no word timing,
/// so each segment's words are spread uniformly over its span; both sides
/// get the same treatment, which keeps identity comparisons exact.
pub fn manifest_doc_evals(hyp: &Manifest, gold: &Manifest) -> Vec<DocEval> {
    let spread = |seg: &SegmentRecord| -> SegmentWords {
        let words: Vec<&str> = seg
            .text_tn
            .split_whitespace()
            .filter(|w| !PUNCT_WORDS.contains(w))
            .collect();
        let n = words.len();
        let step = if n == 0 { 0.0 } else { (seg.end_time - seg.begin_time) / n as f64 };
        SegmentWords {
            begin_s: seg.begin_time,
            end_s: seg.end_time,
            words: words
                .iter()
                .enumerate()
                .map(|(i, w)| TimedWord {
                    text: w.to_string(),
                    begin_s: seg.begin_time + i as f64 * step,
                    end_s: seg.begin_time + (i + 1) as f64 * step,
                })
                .collect(),
        }
    };
    let by_aid: BTreeMap<&str, &AudioDoc> =
        hyp.audios.iter().map(|a| (a.aid.as_str(), a)).collect();
    gold.audios
        .iter()
        .map(|gold_audio| {
            let total_frames = (gold_audio.duration_s * FRAME_RATE as f64).round() as u32;
            let human = gold_audio.segments.iter().map(spread).collect();
            let scored = by_aid
                .get(gold_audio.aid.as_str())
                .map(|a| a.segments.iter().map(|s| (s.wer_estimate, spread(s))).collect())
                .unwrap_or_default();
            DocEval { total_frames, human, scored }
        })
        .collect()
}

pub fn curve_csv(curve: &[PrPoint]) -> String {
    let mut out = String::from("cap,precision,recall,hours\n");
    for p in curve {
        out.push_str(&format!("{},{},{},{}\n", p.cap, p.precision, p.recall, p.retained_hours));
    }
    out
}
