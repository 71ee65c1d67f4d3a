//! Annotation tasks and their append-only JSONL store.
//!
//! Every submission is logged, accepted or not. On open the log is replayed
//! to rebuild which slots of which tasks are filled.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use gec_robust::analysis::Action;
use gec_robust::perturb::{check_perturbed, AuditOptions, AuditReport, Violation};
use gec_robust::types::VariantSpec;
use gec_robust::{Edit, GecCase, GecSample, Origin, TokenSeq};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Variants collected per case before a task is complete.
pub const SLOTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub seq: u64,
    pub case_id: String,
    /// Assigned only to accepted submissions.
    pub slot: Option<usize>,
    pub perturbed: String,
    pub edits: Vec<Edit>,
    pub accepted: bool,
    #[serde(default)]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskVariant {
    pub slot: usize,
    pub source: Vec<String>,
    pub edits: Vec<Edit>,
    pub actions: Vec<Action>,
    pub audit: AuditReport,
}

/// What the UI needs to show one case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationTask {
    pub case_id: String,
    pub source: Vec<String>,
    /// Distinct reference error spans of the original, for highlighting.
    pub error_spans: Vec<Edit>,
    pub variants: Vec<TaskVariant>,
    pub slots_total: usize,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Progress {
    pub tasks: usize,
    pub open: usize,
    pub complete: usize,
    pub accepted_variants: usize,
    pub rejected_submissions: usize,
    pub avg_perturbing_edits: Option<f64>,
}

/// Outcome of a submission.
#[derive(Debug, Clone, PartialEq)]
pub enum Submission {
    Accepted(AnnotationTask),
    Rejected(Vec<Violation>),
}

/// An original sentence awaiting perturbed variants.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub case_id: String,
    pub origin: Origin,
    pub original: GecSample,
}

impl CorpusItem {
    pub fn from_cases(cases: Vec<GecCase>) -> Vec<CorpusItem> {
        cases
            .into_iter()
            .map(|c| CorpusItem {
                case_id: c.case_id,
                origin: c.origin,
                original: c.original,
            })
            .collect()
    }

    pub fn from_samples(samples: Vec<GecSample>) -> Vec<CorpusItem> {
        samples
            .into_iter()
            .map(|s| CorpusItem {
                case_id: s.id.clone(),
                origin: Origin::Other,
                original: s,
            })
            .collect()
    }
}

struct State {
    file: File,
    next_seq: u64,
    accepted: HashMap<String, Vec<StoreEntry>>,
    rejected: usize,
}

pub struct AnnotationStore {
    path: PathBuf,
    corpus: Vec<CorpusItem>,
    index: HashMap<String, usize>,
    state: Mutex<State>,
}

impl AnnotationStore {
    /// Opens (creating if needed) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>, corpus: Vec<CorpusItem>) -> Result<Self, CliError> {
        let path = path.as_ref().to_path_buf();
        let mut index = HashMap::new();
        for (k, item) in corpus.iter().enumerate() {
            if index.insert(item.case_id.clone(), k).is_some() {
                return Err(CliError::Usage(format!("duplicate case id {:?} in corpus", item.case_id)));
            }
        }
        let mut accepted: HashMap<String, Vec<StoreEntry>> = HashMap::new();
        let mut rejected = 0;
        let mut next_seq = 0;
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(|e| CliError::io(&path, e))?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| CliError::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: StoreEntry = serde_json::from_str(&line)
                    .map_err(|e| CliError::Store(format!("{}:{}: {e}", path.display(), n + 1)))?;
                next_seq = next_seq.max(entry.seq + 1);
                if entry.accepted {
                    accepted.entry(entry.case_id.clone()).or_default().push(entry);
                } else {
                    rejected += 1;
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        Ok(AnnotationStore {
            path,
            corpus,
            index,
            state: Mutex::new(State {
                file,
                next_seq,
                accepted,
                rejected,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn item(&self, case_id: &str) -> Option<&CorpusItem> {
        self.index.get(case_id).map(|&k| &self.corpus[k])
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        // a panic while holding the lock cannot leave a half-written entry
        // in memory, since state is updated only after the write succeeds
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn build_task(item: &CorpusItem, entries: &[StoreEntry]) -> AnnotationTask {
        let mut error_spans: Vec<Edit> = item.original.error_edits().cloned().collect();
        error_spans.sort();
        error_spans.dedup();
        let variants = entries
            .iter()
            .map(|e| {
                let source = TokenSeq::split(&e.perturbed);
                let check = check_perturbed(&item.original, &source, e.slot.unwrap_or(0), AuditOptions::default());
                TaskVariant {
                    slot: e.slot.unwrap_or(0),
                    source: source.into_tokens(),
                    edits: check.edits,
                    actions: check.actions,
                    audit: check.audit,
                }
            })
            .collect::<Vec<_>>();
        let status = if variants.len() >= SLOTS {
            TaskStatus::Complete
        } else {
            TaskStatus::Open
        };
        AnnotationTask {
            case_id: item.case_id.clone(),
            source: item.original.source.tokens().to_vec(),
            error_spans,
            variants,
            slots_total: SLOTS,
            status,
        }
    }

    pub fn task(&self, case_id: &str) -> Option<AnnotationTask> {
        let item = self.item(case_id)?;
        let state = self.lock();
        Some(Self::build_task(item, state.accepted.get(case_id).map_or(&[][..], Vec::as_slice)))
    }

    /// The first open task in corpus order.
    pub fn next_open(&self) -> Option<AnnotationTask> {
        let state = self.lock();
        self.corpus
            .iter()
            .find(|item| state.accepted.get(&item.case_id).map_or(0, Vec::len) < SLOTS)
            .map(|item| Self::build_task(item, state.accepted.get(&item.case_id).map_or(&[][..], Vec::as_slice)))
    }

    /// Audits a proposed variant without recording anything.
    pub fn validate(&self, case_id: &str, perturbed: &str) -> Option<gec_robust::perturb::VariantCheck> {
        let item = self.item(case_id)?;
        Some(check_perturbed(&item.original, &TokenSeq::split(perturbed), 0, AuditOptions::default()))
    }

    /// Audits and records a submission. `Ok(None)` means unknown case id.
    pub fn submit(&self, case_id: &str, perturbed: &str) -> Result<Option<Submission>, CliError> {
        let Some(item) = self.item(case_id) else {
            return Ok(None);
        };
        let tokens = TokenSeq::split(perturbed);
        let mut state = self.lock();
        let filled = state.accepted.get(case_id).map_or(0, Vec::len);
        if filled >= SLOTS {
            return Err(CliError::TaskComplete(case_id.to_owned()));
        }
        let slot = filled + 1;
        let strict = AuditOptions {
            require_perturbation: true,
        };
        let check = check_perturbed(&item.original, &tokens, slot, strict);
        let accepted = check.audit.passes();
        let entry = StoreEntry {
            seq: state.next_seq,
            case_id: case_id.to_owned(),
            slot: accepted.then_some(slot),
            perturbed: tokens.join(),
            edits: check.edits,
            accepted,
            violations: check.audit.structural_violations.clone(),
        };
        let line = serde_json::to_string(&entry).expect("store entries serialize");
        writeln!(state.file, "{line}")
            .and_then(|_| state.file.flush())
            .map_err(|e| CliError::io(&self.path, e))?;
        state.next_seq += 1;
        if !accepted {
            state.rejected += 1;
            log::info!("rejected submission for {case_id}: {} violation(s)", entry.violations.len());
            return Ok(Some(Submission::Rejected(entry.violations)));
        }
        state.accepted.entry(case_id.to_owned()).or_default().push(entry);
        let task = Self::build_task(item, &state.accepted[case_id]);
        Ok(Some(Submission::Accepted(task)))
    }

    pub fn progress(&self) -> Progress {
        let state = self.lock();
        let complete = self
            .corpus
            .iter()
            .filter(|i| state.accepted.get(&i.case_id).map_or(0, Vec::len) >= SLOTS)
            .count();
        let all: Vec<&StoreEntry> = state.accepted.values().flatten().collect();
        let edits: usize = all.iter().map(|e| e.edits.len()).sum();
        Progress {
            tasks: self.corpus.len(),
            open: self.corpus.len() - complete,
            complete,
            accepted_variants: all.len(),
            rejected_submissions: state.rejected,
            avg_perturbing_edits: (!all.is_empty()).then(|| edits as f64 / all.len() as f64),
        }
    }

    /// Cases built from the accepted variants, with every case invariant
    /// enforced. Cases without accepted variants are left out.
    pub fn to_cases(&self) -> gec_robust::Result<Vec<GecCase>> {
        let state = self.lock();
        let mut cases = Vec::new();
        for item in &self.corpus {
            let Some(entries) = state.accepted.get(&item.case_id) else {
                continue;
            };
            let variants = entries
                .iter()
                .map(|e| VariantSpec {
                    id: format!("{}-{}", item.case_id, e.slot.unwrap_or(0)),
                    source: TokenSeq::split(&e.perturbed),
                    perturbation: e.edits.clone(),
                })
                .collect();
            cases.push(GecCase::new(item.case_id.clone(), item.origin, item.original.clone(), variants)?);
        }
        Ok(cases)
    }
}
