use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use gec_robust::align::{align, extract_edits_with, MergeStrategy};
use gec_robust::analysis::{analyze, DistanceBins};
use gec_robust::cpr::{assign_splits, export_training_pairs, write_training_pairs, Split, SplitSizes};
use gec_robust::formats::{
    load_candidates, load_cases, load_cases_unaudited, load_frequency_table, load_hypotheses, load_vocabulary,
    parse_m2, write_cases,
};
use gec_robust::metrics::{evaluate_cases, ConsistencyMode, EvalOptions};
use gec_robust::perturb::{
    audit_faithfulness, build_synthetic_corpus, ActionWeights, AuditOptions, CandidateFile, CandidateProvider,
    FrequencyWeighted, UniformVocab,
};
use gec_robust::report::{canonical_json, report_from_evaluations};
use gec_robust::{GecCase, GecSample, TokenSeq};
use serde_json::json;

use crate::annotation::{AnnotationStore, CorpusItem};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Md,
}

/// Context-robustness evaluation for grammatical error correction.
#[derive(Debug, Parser)]
#[command(name = "gec-robust", version)]
pub struct Cli {
    /// Output format; markdown is available for evaluate and analyze.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// F-beta weight of precision against recall.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub beta: f64,

    /// Seed for perturbation generation and split assignment.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score system outputs: original/upper/lower F, CRS and P-CRS.
    Evaluate {
        #[arg(long)]
        cases: PathBuf,
        /// TSV of case_id, variant index and corrected sentence.
        #[arg(long)]
        hyps: PathBuf,
        /// Require every pair of sentences in a case to agree, not only
        /// each variant with the original.
        #[arg(long)]
        mutual: bool,
    },
    /// P-CRS by perturbation action, distance and word frequency.
    Analyze {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        /// TSV of word and training-corpus count.
        #[arg(long)]
        freq: Option<PathBuf>,
        #[arg(long, default_value = "0-1,2-4,5-9,10+")]
        bins: String,
    },
    /// Generate synthetic single-edit variants for M2 samples.
    Perturb {
        #[arg(long)]
        m2: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Relative odds of substitution, insertion and deletion.
        #[arg(long, default_value = "1,1,1")]
        weights: String,
        /// Words (optionally with counts) to draw from; defaults to the
        /// tokens of the input itself.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Substitution candidates, `word<TAB>c1,c2,...`.
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Ignore vocabulary counts and draw uniformly.
        #[arg(long)]
        uniform: bool,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Audit a case file for structural faithfulness violations.
    Validate {
        #[arg(long)]
        cases: PathBuf,
        /// Also flag variants identical to their original.
        #[arg(long)]
        require_perturbation: bool,
    },
    /// Export original/perturbed training pairs as JSON Lines.
    Pairs {
        #[arg(long)]
        cases: PathBuf,
        /// train, dev, test or all.
        #[arg(long, default_value = "all")]
        split: String,
        /// Case counts per split, e.g. 3000/500/2500.
        #[arg(long)]
        split_sizes: Option<String>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Align two sentences and print the operations and edits.
    Align {
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// One edit per operation instead of merged runs.
        #[arg(long)]
        all_split: bool,
    },
    /// Convert an M2 file to JSON Lines.
    ParseM2 {
        #[arg(long)]
        m2: PathBuf,
    },
    /// Run the annotation service.
    Serve {
        /// Originals to annotate, from M2.
        #[arg(long, conflicts_with = "cases", required_unless_present = "cases")]
        m2: Option<PathBuf>,
        /// Originals to annotate, from a case file.
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Append-only submission log.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

fn read_m2(path: &Path) -> Result<Vec<GecSample>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(parse_m2(&text)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn json_only(format: Format, command: &str) -> Result<(), CliError> {
    match format {
        Format::Json => Ok(()),
        Format::Md => Err(CliError::Usage(format!("markdown output is not available for {command}"))),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .and_then(|_| if text.ends_with('\n') { Ok(()) } else { out.write_all(b"\n") })
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io("<stdout>", e))
}

fn evaluated(
    cases: &Path,
    hyps: &Path,
    opts: EvalOptions,
) -> Result<(Vec<GecCase>, Vec<gec_robust::metrics::CaseEvaluation>), CliError> {
    let cases = load_cases(cases)?;
    if cases.is_empty() {
        return Err(gec_robust::Error::EmptyCorpus.into());
    }
    let (hyps, _warnings) = load_hypotheses(hyps)?;
    let evals = evaluate_cases(&cases, &hyps, opts)?;
    Ok((cases, evals))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if !(cli.beta > 0.0 && cli.beta.is_finite()) {
        return Err(CliError::Usage(format!("--beta must be positive, got {}", cli.beta)));
    }
    match cli.command {
        Command::Evaluate { cases, hyps, mutual } => {
            let opts = EvalOptions {
                beta: cli.beta,
                mode: if mutual {
                    ConsistencyMode::Mutual
                } else {
                    ConsistencyMode::VsOriginal
                },
            };
            let (_, evals) = evaluated(&cases, &hyps, opts)?;
            let report = report_from_evaluations(&evals, opts)?;
            match cli.format {
                Format::Json => emit(out, &report.to_json()),
                Format::Md => emit(out, &report.to_markdown()),
            }
        }
        Command::Analyze { cases, hyps, freq, bins } => {
            let bins: DistanceBins = bins.parse()?;
            let freq = freq.map(load_frequency_table).transpose()?;
            let opts = EvalOptions {
                beta: cli.beta,
                ..EvalOptions::default()
            };
            let (cases, evals) = evaluated(&cases, &hyps, opts)?;
            let report = analyze(&cases, &evals, &bins, freq.as_ref())?;
            match cli.format {
                Format::Json => emit(out, &canonical_json(&report)),
                Format::Md => emit(out, &report.to_markdown()),
            }
        }
        Command::Perturb {
            m2,
            k,
            weights,
            vocab,
            candidates,
            uniform,
            output,
        } => {
            json_only(cli.format, "perturb")?;
            let weights: ActionWeights = weights.parse()?;
            let samples = read_m2(&m2)?;
            let words: Vec<(String, u64)> = match vocab {
                Some(path) => load_vocabulary(path)?,
                None => samples
                    .iter()
                    .flat_map(|s| s.source.tokens().iter().map(|t| (t.clone(), 1)))
                    .collect(),
            };
            let base: Box<dyn CandidateProvider> = if uniform {
                Box::new(UniformVocab::new(words.into_iter().map(|(w, _)| w)))
            } else {
                Box::new(FrequencyWeighted::new(words))
            };
            let provider: Box<dyn CandidateProvider> = match candidates {
                Some(path) => Box::new(CandidateFile::new(load_candidates(path)?, base)),
                None => base,
            };
            let (cases, warnings) = build_synthetic_corpus(&samples, k, cli.seed, provider.as_ref(), weights)?;
            if !warnings.is_empty() {
                log::warn!("{} sample(s) could not be perturbed", warnings.len());
            }
            match output {
                Some(path) => write_cases(&cases, create(&path)?).map_err(|e| CliError::io(&path, e)),
                None => write_cases(&cases, out).map_err(|e| CliError::io("<stdout>", e)),
            }
        }
        Command::Validate {
            cases,
            require_perturbation,
        } => {
            json_only(cli.format, "validate")?;
            let cases = load_cases_unaudited(cases)?;
            let opts = AuditOptions { require_perturbation };
            let reports: Vec<_> = cases
                .iter()
                .map(|c| {
                    let r = audit_faithfulness(c, opts);
                    json!({
                        "case_id": c.case_id,
                        "passes": r.passes(),
                        "structural_violations": r.structural_violations,
                        "needs_human_review": r.needs_human_review,
                    })
                })
                .collect();
            let failed = reports.iter().filter(|r| r["passes"] == false).count();
            let doc = json!({"cases": cases.len(), "failed": failed, "reports": reports});
            emit(out, &canonical_json(&doc))?;
            if failed > 0 {
                return Err(CliError::AuditFailed {
                    failed,
                    total: cases.len(),
                });
            }
            Ok(())
        }
        Command::Pairs {
            cases,
            split,
            split_sizes,
            output,
        } => {
            json_only(cli.format, "pairs")?;
            let cases = load_cases(cases)?;
            let (split, assignment) = if split == "all" {
                (None, Vec::new())
            } else {
                let split: Split = split.parse()?;
                let sizes: SplitSizes = split_sizes
                    .ok_or_else(|| CliError::Usage("--split-sizes is required with a named split".into()))?
                    .parse()?;
                (Some(split), assign_splits(cases.len(), sizes, cli.seed)?)
            };
            let pairs = export_training_pairs(&cases, &assignment, split);
            let n = match output {
                Some(path) => write_training_pairs(pairs, create(&path)?)?,
                None => write_training_pairs(pairs, &mut *out)?,
            };
            log::info!("wrote {n} pair(s)");
            Ok(())
        }
        Command::Align {
            source,
            target,
            all_split,
        } => {
            json_only(cli.format, "align")?;
            let (a, b) = (TokenSeq::split(&source), TokenSeq::split(&target));
            let alignment = align(&a, &b);
            let strategy = if all_split {
                MergeStrategy::AllSplit
            } else {
                MergeStrategy::MaximalRun
            };
            let doc = json!({
                "source": a,
                "target": b,
                "cost": alignment.total_cost(),
                "ops": alignment.ops(),
                "edits": extract_edits_with(&alignment, strategy),
            });
            emit(out, &canonical_json(&doc))
        }
        Command::ParseM2 { m2 } => {
            json_only(cli.format, "parse-m2")?;
            let mut text = String::new();
            for s in read_m2(&m2)? {
                let refs: Vec<_> = s
                    .references
                    .iter()
                    .map(|a| json!({"annotator": a.annotator, "edits": a.edits, "labels": a.labels}))
                    .collect();
                text.push_str(&canonical_json(&json!({"id": s.id, "source": s.source, "references": refs})));
                text.push('\n');
            }
            emit(out, &text)
        }
        Command::Serve { m2, cases, store, bind } => {
            let corpus = match (m2, cases) {
                (Some(p), _) => CorpusItem::from_samples(read_m2(&p)?),
                (None, Some(p)) => CorpusItem::from_cases(load_cases(p)?),
                (None, None) => return Err(CliError::Usage("serve needs --m2 or --cases".into())),
            };
            let store = Arc::new(AnnotationStore::open(store, corpus)?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
            rt.block_on(crate::server::serve(store, &bind))
        }
    }
}
