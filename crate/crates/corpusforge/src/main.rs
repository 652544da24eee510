//! Command-line frontend. Exit codes: 0 on success, 2 for configuration
//! or usage problems, 3 for IO problems.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use corpusforge::chunk_match::ChunkMatch;
use corpusforge::evaluator::pr_curve;
use corpusforge::metadata::{load_manifest, save_manifest, verify_manifest, VerifyStatus};
use corpusforge::pipeline::{
    self, chunk_alignments, curve_csv, gold_manifest, load_config, load_corpus,
    manifest_doc_evals, read_jsonl, validate_with_options, write_jsonl, DocRecord, PipelineConfig,
    PipelineError, Stage,
};
use corpusforge::sw_align::ChunkAlignment;
use corpusforge::synth::{generate, SynthSpec};
use corpusforge::textnorm::normalize_text;
use corpusforge::validator::{RewritePolicy, ValidateOptions, DEFAULT_BEAM};

#[derive(Parser)]
#[command(name = "corpusforge", version, about = "Corpus creation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Also dump the chunk matches, one JSON line per match.
        #[arg(long, value_name = "PATH")]
        dump_matches: Option<PathBuf>,
        /// Also dump the per-chunk alignments, one JSON line per document.
        #[arg(long, value_name = "PATH")]
        dump_align: Option<PathBuf>,
        /// Also dump per-document CTM files into this directory.
        #[arg(long, value_name = "DIR")]
        dump_ctm: Option<PathBuf>,
    },
    /// Run exactly one stage on dumped intermediates.
    Stage {
        #[arg(long)]
        config: PathBuf,
        /// normalize, match, align, segment, graph, validate, or evaluate.
        #[arg(long)]
        stage: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
    },
    /// Normalize text, one line in, one normalized line out.
    Normalize {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Check a manifest against the files on disk.
    Verify {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Segment aligned transcripts (the align stage's dump).
    Segment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Split on silences at least this long, in seconds.
        #[arg(long)]
        sil_thresh: Option<f64>,
        /// Split after punctuation backed by at least this much pause.
        #[arg(long)]
        punct_pause: Option<f64>,
        /// Hard segment length ceiling, in seconds.
        #[arg(long)]
        max_len: Option<f64>,
        /// Silence padding kept around each segment, in seconds.
        #[arg(long)]
        boundary_sil: Option<f64>,
    },
    /// Build alignment graphs for segmented documents.
    BuildGraph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// Also dump every graph as a readable arc list.
        #[arg(long, value_name = "PATH")]
        dump_arcs: Option<PathBuf>,
    },
    /// Decode segments against their graphs with one explicit policy.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// WER cap in percent.
        #[arg(long, default_value_t = 0.0)]
        cap: f64,
        #[arg(long, value_enum, default_value = "off")]
        fillers: Switch,
        #[arg(long, value_enum, default_value = "off")]
        disfluency: Switch,
        #[arg(long, default_value_t = DEFAULT_BEAM)]
        beam: usize,
    },
    /// Score a manifest against a reference manifest, sweeping WER caps.
    Evaluate {
        #[arg(long)]
        hyp_manifest: PathBuf,
        #[arg(long)]
        ref_manifest: PathBuf,
        /// Comma-separated WER caps to sweep.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8")]
        caps: Vec<f64>,
        #[arg(long)]
        curve_out: PathBuf,
    },
    /// Generate a synthetic corpus: documents, transcripts, gold manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "out")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn io_at(path: &Path, e: io::Error) -> PipelineError {
    PipelineError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn dispatch(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Run { config, dump_matches, dump_align, dump_ctm } => {
            let cfg = load_config(&config)?;
            let (manifest, report) = pipeline::run(&cfg)?;
            println!(
                "{} documents in, {} failed; kept {} of {} segments ({:.2} h) -> {}",
                report.docs,
                report.docs_failed,
                report.kept_segments,
                report.candidate_segments,
                report.kept_hours,
                cfg.output_dir.display()
            );
            if let Some(pr) = &report.pr {
                println!("precision {:.4}, recall {:.4} against ground truth", pr.precision, pr.recall);
            }
            drop(manifest);
            if let Some(path) = dump_matches {
                dump_match_lines(&cfg, &path)?;
            }
            if let Some(path) = dump_align {
                dump_align_lines(&cfg, &path)?;
            }
            if let Some(dir) = dump_ctm {
                dump_ctm_files(&cfg, &dir)?;
            }
            Ok(())
        }
        Command::Stage { config, stage, input, output } => {
            let cfg = load_config(&config)?;
            let stage: Stage =
                stage.parse().map_err(|e: pipeline::UnknownStageError| {
                    PipelineError::Config(e.to_string())
                })?;
            pipeline::run_stage(&cfg, stage, &input, &output)
        }
        Command::Normalize { input, output } => normalize_lines(input, output),
        Command::Verify { manifest, root, report } => {
            let bytes = fs::read(&manifest).map_err(|e| io_at(&manifest, e))?;
            let m = load_manifest(&bytes)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", manifest.display())))?;
            let result = verify_manifest(&m, &root);
            let ok = result.entries.iter().filter(|e| e.status == VerifyStatus::Ok).count();
            fs::write(&report, to_pretty(&result)).map_err(|e| io_at(&report, e))?;
            println!(
                "verified {} documents: {} ok, {} flagged -> {}",
                result.entries.len(),
                ok,
                result.entries.len() - ok,
                report.display()
            );
            Ok(())
        }
        Command::Segment { config, input, output, sil_thresh, punct_pause, max_len, boundary_sil } => {
            let mut cfg = load_config(&config)?;
            if let Some(v) = sil_thresh {
                cfg.segmenter.sil_thresh_s = v;
            }
            if let Some(v) = punct_pause {
                cfg.segmenter.punct_pause_s = v;
            }
            if let Some(v) = max_len {
                cfg.segmenter.max_len_s = v;
            }
            if let Some(v) = boundary_sil {
                cfg.segmenter.boundary_sil_s = v;
            }
            pipeline::run_stage(&cfg, Stage::Segment, &input, &output)
        }
        Command::BuildGraph { config, input, output, dump_arcs } => {
            let cfg = load_config(&config)?;
            pipeline::run_stage(&cfg, Stage::Graph, &input, &output)?;
            if let Some(path) = dump_arcs {
                let records: Vec<DocRecord> = read_jsonl(&output)?;
                let mut text = String::new();
                for rec in &records {
                    let (Some(bundles), Some(graphs)) = (&rec.segments, &rec.graphs) else {
                        continue;
                    };
                    for (b, g) in bundles.iter().zip(graphs) {
                        text.push_str(&format!("# {}\n", b.sid));
                        text.push_str(&g.to_arc_list());
                    }
                }
                fs::write(&path, text).map_err(|e| io_at(&path, e))?;
            }
            Ok(())
        }
        Command::Validate { config, input, results, cap, fillers, disfluency, beam } => {
            let cfg = load_config(&config)?;
            let corpus = load_corpus(&cfg)?;
            let docs = corpus.iter().map(|d| (d.aid.clone(), d.clone())).collect();
            let records: Vec<DocRecord> = read_jsonl(&input)?;
            let opts = ValidateOptions {
                cap,
                cap_exclusive: false,
                policy: RewritePolicy { fillers: fillers.is_on(), disfluency: disfluency.is_on() },
                beam,
            };
            let out = validate_with_options(&cfg, &docs, &records, &opts);
            let passed = out.iter().filter(|r| r.passed).count();
            write_jsonl(&results, &out)?;
            println!("validated {} segments: {} passed, {} failed", out.len(), passed, out.len() - passed);
            Ok(())
        }
        Command::Evaluate { hyp_manifest, ref_manifest, caps, curve_out } => {
            let hyp_bytes = fs::read(&hyp_manifest).map_err(|e| io_at(&hyp_manifest, e))?;
            let hyp = load_manifest(&hyp_bytes)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", hyp_manifest.display())))?;
            let ref_bytes = fs::read(&ref_manifest).map_err(|e| io_at(&ref_manifest, e))?;
            let reference = load_manifest(&ref_bytes)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", ref_manifest.display())))?;
            let mut caps = caps;
            caps.sort_by(f64::total_cmp);
            caps.dedup();
            let evals = manifest_doc_evals(&hyp, &reference);
            let curve = pr_curve(&evals, &caps)
                .map_err(|e| PipelineError::Config(format!("evaluation failed: {e}")))?;
            fs::write(&curve_out, curve_csv(&curve)).map_err(|e| io_at(&curve_out, e))?;
            println!("wrote {} curve points -> {}", curve.len(), curve_out.display());
            Ok(())
        }
        Command::Synth { spec, out_dir } => {
            let bytes = fs::read(&spec).map_err(|e| io_at(&spec, e))?;
            let spec: SynthSpec = serde_json::from_slice(&bytes)
                .map_err(|e| PipelineError::Config(format!("{}: {e}", spec.display())))?;
            let docs = generate(&spec).map_err(|e| PipelineError::Config(e.to_string()))?;
            fs::create_dir_all(&out_dir).map_err(|e| io_at(&out_dir, e))?;
            write_jsonl(&out_dir.join("docs.jsonl"), &docs)?;
            let transcripts = out_dir.join("transcripts");
            fs::create_dir_all(&transcripts).map_err(|e| io_at(&transcripts, e))?;
            for doc in &docs {
                let path = transcripts.join(format!("{}.txt", doc.aid));
                fs::write(&path, &doc.transcript_raw).map_err(|e| io_at(&path, e))?;
            }
            let gold = gold_manifest(&docs, &PipelineConfig::default());
            fs::write(out_dir.join("gold_manifest.json"), save_manifest(&gold))
                .map_err(|e| io_at(&out_dir, e))?;
            println!(
                "generated {} documents ({:.2} h of speech) -> {}",
                docs.len(),
                gold.segment_hours(),
                out_dir.display()
            );
            Ok(())
        }
    }
}

fn to_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

fn normalize_lines(input: Option<PathBuf>, output: Option<PathBuf>) -> Result<(), PipelineError> {
    let stdin = io::stdin();
    let mut reader: Box<dyn BufRead> = match &input {
        Some(p) => Box::new(BufReader::new(fs::File::open(p).map_err(|e| io_at(p, e))?)),
        None => Box::new(stdin.lock()),
    };
    let stdout = io::stdout();
    let mut writer: Box<dyn Write> = match &output {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p).map_err(|e| io_at(p, e))?)),
        None => Box::new(stdout.lock()),
    };
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let text = line.trim_end_matches(['\n', '\r']);
        writeln!(writer, "{}", normalize_text(text).render())?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MatchLine<'a> {
    aid: &'a str,
    #[serde(flatten)]
    m: &'a ChunkMatch,
}

fn dump_match_lines(cfg: &PipelineConfig, path: &Path) -> Result<(), PipelineError> {
    let records: Vec<DocRecord> = read_jsonl(&cfg.output_dir.join("match.jsonl"))?;
    let lines: Vec<MatchLine> = records
        .iter()
        .flat_map(|rec| {
            rec.matches
                .iter()
                .flat_map(|ms| &ms.matches)
                .map(|m| MatchLine { aid: &rec.aid, m })
        })
        .collect();
    write_jsonl(path, &lines)
}

#[derive(Serialize)]
struct AlignLine<'a> {
    aid: &'a str,
    alignments: Vec<ChunkAlignment>,
}

fn dump_align_lines(cfg: &PipelineConfig, path: &Path) -> Result<(), PipelineError> {
    let corpus = load_corpus(cfg)?;
    let records: Vec<DocRecord> = read_jsonl(&cfg.output_dir.join("match.jsonl"))?;
    let mut lines = Vec::new();
    for rec in &records {
        let doc = corpus.iter().find(|d| d.aid == rec.aid);
        if let (Some(doc), Some(ref_seq), Some(ms)) = (doc, &rec.ref_seq, &rec.matches) {
            lines.push(AlignLine {
                aid: &rec.aid,
                alignments: chunk_alignments(cfg, doc, ref_seq, ms),
            });
        }
    }
    write_jsonl(path, &lines)
}

fn dump_ctm_files(cfg: &PipelineConfig, dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    let records: Vec<DocRecord> = read_jsonl(&cfg.output_dir.join("align.jsonl"))?;
    for rec in &records {
        if let Some(tt) = &rec.transcript {
            let path = dir.join(format!("{}.ctm", rec.aid));
            fs::write(&path, tt.to_ctm()).map_err(|e| io_at(&path, e))?;
        }
    }
    Ok(())
}
