//! P-CRS breakdowns by perturbation action, distance and word frequency,
//! plus perturbation statistics over a corpus.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_cases, percentage, CaseEvaluation, EvalOptions};
use crate::types::{Edit, FrequencyTable, GecCase, HypothesisSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Substitute,
    Insert,
    Delete,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Substitute, Action::Insert, Action::Delete];

    pub fn of(edit: &Edit) -> Action {
        if edit.is_insertion() {
            Action::Insert
        } else if edit.is_deletion() {
            Action::Delete
        } else {
            Action::Substitute
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Substitute => "substitute",
            Action::Insert => "insert",
            Action::Delete => "delete",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One perturbation edit together with the verdict of the pair it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbRecord {
    pub case_id: String,
    pub variant_index: usize,
    pub action: Action,
    pub perturb_span: Edit,
    pub distance: Option<usize>,
    pub target_word: Option<String>,
    pub consistent: bool,
}

/// Tokens strictly between two spans; zero when adjacent or overlapping.
pub fn span_gap(a: (usize, usize), b: (usize, usize)) -> usize {
    b.0.saturating_sub(a.1).max(a.0.saturating_sub(b.1))
}

/// Records for already evaluated cases. `evals` must be parallel to `cases`.
///
/// Distances are only given for variants with a single perturbation edit
/// whose original has a single error in its first annotation.
pub fn records_from_evaluations(cases: &[GecCase], evals: &[CaseEvaluation]) -> Vec<PerturbRecord> {
    let mut records = Vec::new();
    for (case, eval) in cases.iter().zip(evals) {
        debug_assert_eq!(case.case_id, eval.case_id);
        let errors = &case.original.references[0].edits;
        for (vi, perturbation) in case.perturbations.iter().enumerate() {
            let single = perturbation.len() == 1 && errors.len() == 1;
            for edit in perturbation {
                let action = Action::of(edit);
                records.push(PerturbRecord {
                    case_id: case.case_id.clone(),
                    variant_index: vi + 1,
                    action,
                    perturb_span: edit.clone(),
                    distance: single.then(|| span_gap((edit.start, edit.end), (errors[0].start, errors[0].end))),
                    target_word: (action != Action::Delete).then(|| edit.replacement[0].clone()),
                    consistent: eval.consistent[vi],
                });
            }
        }
    }
    records
}

pub fn build_records(cases: &[GecCase], hyps: &HypothesisSet) -> Result<Vec<PerturbRecord>> {
    let evals = evaluate_cases(cases, hyps, EvalOptions::default())?;
    Ok(records_from_evaluations(cases, &evals))
}

/// P-CRS over one group of records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScore {
    pub group: String,
    pub pairs: usize,
    pub consistent: usize,
    pub p_crs: f64,
}

/// Groups records by key, in the order of `groups`; empty groups are omitted.
fn breakdown<'a, K: PartialEq + fmt::Display>(
    groups: impl IntoIterator<Item = K>,
    records: impl IntoIterator<Item = (&'a PerturbRecord, K)> + Clone,
) -> Vec<GroupScore> {
    groups
        .into_iter()
        .filter_map(|g| {
            let (pairs, consistent) = records
                .clone()
                .into_iter()
                .filter(|(_, k)| *k == g)
                .fold((0, 0), |(n, c), (r, _)| (n + 1, c + usize::from(r.consistent)));
            (pairs > 0).then(|| GroupScore {
                group: g.to_string(),
                pairs,
                consistent,
                p_crs: percentage(consistent, pairs),
            })
        })
        .collect()
}

pub fn pcrs_by_action(records: &[PerturbRecord]) -> Vec<GroupScore> {
    breakdown(Action::ALL, records.iter().map(|r| (r, r.action)))
}

/// Inclusive distance range; `hi == None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistanceBin {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl DistanceBin {
    pub fn contains(&self, d: usize) -> bool {
        d >= self.lo && self.hi.is_none_or(|hi| d <= hi)
    }
}

impl fmt::Display for DistanceBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(hi) => write!(f, "{}-{}", self.lo, hi),
            None => write!(f, "{}+", self.lo),
        }
    }
}

impl Serialize for DistanceBin {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl FromStr for DistanceBin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad distance bin {s:?}; expected LO-HI or LO+"));
        let s = s.trim();
        if let Some(lo) = s.strip_suffix('+') {
            return Ok(DistanceBin {
                lo: lo.trim().parse().map_err(|_| bad())?,
                hi: None,
            });
        }
        let (lo, hi) = s.split_once('-').ok_or_else(bad)?;
        let (lo, hi): (usize, usize) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
        if lo > hi {
            return Err(bad());
        }
        Ok(DistanceBin { lo, hi: Some(hi) })
    }
}

/// Non-overlapping distance bins, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceBins(Vec<DistanceBin>);

impl DistanceBins {
    pub fn new(mut bins: Vec<DistanceBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Config("at least one distance bin is required".into()));
        }
        bins.sort_by_key(|b| b.lo);
        for w in bins.windows(2) {
            if w[0].hi.is_none_or(|hi| hi >= w[1].lo) {
                return Err(Error::Config(format!("distance bins {} and {} overlap", w[0], w[1])));
            }
        }
        Ok(DistanceBins(bins))
    }

    pub fn bins(&self) -> &[DistanceBin] {
        &self.0
    }

    pub fn find(&self, d: usize) -> Option<DistanceBin> {
        self.0.iter().copied().find(|b| b.contains(d))
    }
}

impl Default for DistanceBins {
    fn default() -> Self {
        "0-1,2-4,5-9,10+".parse().expect("default bins are valid")
    }
}

impl FromStr for DistanceBins {
    type Err = Error;

    /// Comma-separated, e.g. `0-1,2-4,5-9,10+`.
    fn from_str(s: &str) -> Result<Self> {
        DistanceBins::new(s.split(',').map(str::parse).collect::<Result<_>>()?)
    }
}

/// Records without a distance, or outside every bin, do not participate.
pub fn pcrs_by_distance(records: &[PerturbRecord], bins: &DistanceBins) -> Vec<GroupScore> {
    breakdown(
        bins.bins().iter().copied(),
        records
            .iter()
            .filter_map(|r| r.distance.and_then(|d| bins.find(d)).map(|b| (r, b))),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyBand {
    Low,
    Medium,
    High,
}

impl FrequencyBand {
    pub const ALL: [FrequencyBand; 3] = [FrequencyBand::Low, FrequencyBand::Medium, FrequencyBand::High];

    pub fn of(count: u64) -> FrequencyBand {
        match count {
            0..=9 => FrequencyBand::Low,
            10..=50 => FrequencyBand::Medium,
            _ => FrequencyBand::High,
        }
    }
}

impl fmt::Display for FrequencyBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrequencyBand::Low => "low",
            FrequencyBand::Medium => "medium",
            FrequencyBand::High => "high",
        })
    }
}

/// Substitution records only, banded by the training-corpus count of the
/// substituted-in word.
pub fn pcrs_by_frequency(records: &[PerturbRecord], freq: &FrequencyTable) -> Vec<GroupScore> {
    breakdown(
        FrequencyBand::ALL,
        records.iter().filter(|r| r.action == Action::Substitute).map(|r| {
            let word = r.target_word.as_deref().unwrap_or_default();
            (r, FrequencyBand::of(freq.count(word)))
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionShare {
    pub action: Action,
    pub edits: usize,
    /// Percentage of all perturbation edits.
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotationStats {
    pub cases: usize,
    pub variants: usize,
    pub edits: usize,
    pub avg_edits_per_variant: f64,
    pub action_distribution: Vec<ActionShare>,
}

pub fn annotation_stats(cases: &[GecCase]) -> Result<AnnotationStats> {
    let variants: usize = cases.iter().map(|c| c.perturbations.len()).sum();
    if variants == 0 {
        return Err(Error::EmptyCorpus);
    }
    let mut per_action = [0usize; 3];
    for edit in cases.iter().flat_map(|c| c.perturbations.iter().flatten()) {
        per_action[Action::of(edit) as usize] += 1;
    }
    let edits: usize = per_action.iter().sum();
    Ok(AnnotationStats {
        cases: cases.len(),
        variants,
        edits,
        avg_edits_per_variant: edits as f64 / variants as f64,
        action_distribution: Action::ALL
            .iter()
            .zip(per_action)
            .map(|(&action, n)| ActionShare {
                action,
                edits: n,
                share: if edits == 0 { 0.0 } else { percentage(n, edits) },
            })
            .collect(),
    })
}

/// Everything the `analyze` command reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub records: usize,
    pub by_action: Vec<GroupScore>,
    pub distance_bins: Vec<DistanceBin>,
    pub by_distance: Vec<GroupScore>,
    pub by_frequency: Option<Vec<GroupScore>>,
    pub annotation: AnnotationStats,
}

impl AnalysisReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let mut table = |title: &str, rows: &[GroupScore]| {
            out.push_str(&format!("### P-CRS by {title}\n\n| Group | Pairs | Consistent | P-CRS |\n|---|---:|---:|---:|\n"));
            for r in rows {
                out.push_str(&format!("| {} | {} | {} | {:.2} |\n", r.group, r.pairs, r.consistent, r.p_crs));
            }
            out.push('\n');
        };
        table("action", &self.by_action);
        table("distance", &self.by_distance);
        if let Some(rows) = &self.by_frequency {
            table("frequency", rows);
        }
        let a = &self.annotation;
        out.push_str(&format!(
            "Perturbing edits per variant: {:.2} ({} edits over {} variants)\n",
            a.avg_edits_per_variant, a.edits, a.variants
        ));
        out
    }
}

pub fn analyze(
    cases: &[GecCase],
    evals: &[CaseEvaluation],
    bins: &DistanceBins,
    freq: Option<&FrequencyTable>,
) -> Result<AnalysisReport> {
    let records = records_from_evaluations(cases, evals);
    Ok(AnalysisReport {
        records: records.len(),
        by_action: pcrs_by_action(&records),
        distance_bins: bins.bins().to_vec(),
        by_distance: pcrs_by_distance(&records, bins),
        by_frequency: freq.map(|f| pcrs_by_frequency(&records, f)),
        annotation: annotation_stats(cases)?,
    })
}
