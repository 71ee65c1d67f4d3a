//! Edit-level scoring and the context-robustness metrics.
//!
//! Hypothesis edits are extracted by aligning each source sentence with the
//! system output. A hypothesis edit counts as a true positive only when its
//! span and replacement equal a reference edit exactly (case-sensitive).

use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::Serialize;

use crate::align::{diff, PerturbationMap};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{Annotation, Edit, GecCase, HypothesisSet, Origin};

/// True-positive, false-positive and false-negative edit counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Counts { tp, fp, fn_ }
    }

    /// Swaps the roles of hypothesis and reference.
    pub fn swapped(self) -> Self {
        Counts::new(self.tp, self.fn_, self.fp)
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, rhs: Counts) -> Counts {
        Counts::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Precision, recall and F-beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf<T> {
    pub p: T,
    pub r: T,
    pub f: T,
}

impl<T: Scalar> Prf<T> {
    /// F-beta from precision and recall; zero when both are zero.
    pub fn from_pr(p: T, r: T, beta: T) -> Self {
        let b2 = beta * beta;
        let num = (T::one() + b2) * p * r;
        let den = b2 * p + r;
        let f = if num == T::zero() || den == T::zero() {
            T::zero()
        } else {
            num / den
        };
        Prf { p, r, f }
    }
}

/// Scores counts. Empty denominators give precision or recall 1, so a
/// sentence with nothing to correct and no edits proposed scores perfectly.
pub fn f_beta<T: Scalar>(counts: Counts, beta: T) -> Prf<T> {
    assert!(beta > T::zero(), "beta must be positive");
    let tp = T::from_count(counts.tp);
    let p = if counts.tp + counts.fp == 0 {
        T::one()
    } else {
        tp / T::from_count(counts.tp + counts.fp)
    };
    let r = if counts.tp + counts.fn_ == 0 {
        T::one()
    } else {
        tp / T::from_count(counts.tp + counts.fn_)
    };
    Prf::from_pr(p, r, beta)
}

/// Counts against a single reference edit list.
pub fn count_matches(hyp: &[Edit], reference: &[Edit]) -> Counts {
    let tp = hyp.iter().filter(|h| reference.contains(h)).count();
    Counts::new(tp, hyp.len() - tp, reference.len() - tp)
}

/// Counts against the reference annotation that maximizes sentence-level
/// F-beta; ties go to the lowest annotation index.
pub fn match_edits<T: Scalar>(hyp: &[Edit], references: &[Annotation], beta: T) -> Counts {
    let mut best: Option<(Counts, T)> = None;
    for ann in references {
        let counts = count_matches(hyp, &ann.edits);
        let f = f_beta(counts, beta).f;
        if best.is_none_or(|(_, bf)| f > bf) {
            best = Some((counts, f));
        }
    }
    best.map(|(c, _)| c).unwrap_or_else(|| Counts::new(0, hyp.len(), 0))
}

/// Whether CRS treats a case as consistent when every variant agrees with the
/// original, or when every pair of sentences in the case agrees.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ConsistencyMode {
    #[default]
    VsOriginal,
    Mutual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub beta: f64,
    pub mode: ConsistencyMode,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            beta: 0.5,
            mode: ConsistencyMode::VsOriginal,
        }
    }
}

/// Hypothesis edits of one sentence, described relative to the original.
struct SentenceEdits {
    /// Whether some edit touches this sentence's own perturbed spans.
    has_boundary: bool,
    /// Edits mapped into original coordinates (empty when `has_boundary`).
    in_original: Vec<Edit>,
}

/// Everything the corpus metrics need from one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseEvaluation {
    pub case_id: String,
    pub origin: Origin,
    /// Sentence counts, index 0 = original.
    pub counts: Vec<Counts>,
    /// Sentence-level F-beta per sentence.
    pub sentence_f: Vec<f64>,
    pub upper: usize,
    pub lower: usize,
    /// `consistent[i]` is the verdict for variant `i + 1` against the original.
    pub consistent: Vec<bool>,
    /// CRS verdict for the case under the chosen mode.
    pub case_consistent: bool,
}

impl CaseEvaluation {
    pub fn consistent_pairs(&self) -> usize {
        self.consistent.iter().filter(|&&c| c).count()
    }
}

/// Indices of the best and worst scoring sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub upper_index: usize,
    pub lower_index: usize,
}

/// Arg-max and arg-min of sentence-level F; ties go to the lowest index.
pub fn bounds_from_scores(scores: &[f64]) -> Bounds {
    let mut upper = 0;
    let mut lower = 0;
    for (k, &f) in scores.iter().enumerate() {
        if f > scores[upper] {
            upper = k;
        }
        if f < scores[lower] {
            lower = k;
        }
    }
    Bounds {
        upper_index: upper,
        lower_index: lower,
    }
}

fn sentence_counts(case: &GecCase, index: usize, hyps: &HypothesisSet, beta: f64) -> Result<Counts> {
    let sample = case.sentence(index).ok_or(Error::IndexOutOfRange {
        index,
        size: case.num_sentences(),
    })?;
    let hyp = hyps.require(&case.case_id, index)?;
    let edits = diff(&sample.source, hyp);
    Ok(match_edits(&edits, &sample.references, beta))
}

/// Upper/lower-bound selection for one case.
pub fn case_bounds(case: &GecCase, hyps: &HypothesisSet, beta: f64) -> Result<Bounds> {
    let scores = (0..case.num_sentences())
        .map(|k| sentence_counts(case, k, hyps, beta).map(|c| f_beta(c, beta).f))
        .collect::<Result<Vec<f64>>>()?;
    Ok(bounds_from_scores(&scores))
}

fn original_edits(case: &GecCase, hyps: &HypothesisSet) -> Result<Vec<Edit>> {
    Ok(diff(&case.original.source, hyps.require(&case.case_id, 0)?))
}

fn variant_edits(case: &GecCase, index: usize, hyps: &HypothesisSet) -> Result<(SentenceEdits, PerturbationMap)> {
    let variant = &case.variants[index - 1];
    let map = PerturbationMap::new(&case.perturbations[index - 1]);
    let edits = diff(&variant.source, hyps.require(&case.case_id, index)?);
    let has_boundary = edits.iter().any(|e| map.touches_perturbed(e));
    let in_original = if has_boundary {
        Vec::new()
    } else {
        edits
            .iter()
            .map(|e| map.to_original(e).expect("non-boundary edits map back"))
            .collect()
    };
    Ok((
        SentenceEdits {
            has_boundary,
            in_original,
        },
        map,
    ))
}

/// Whether variant `index` (1-based) is corrected consistently with the
/// original.
///
/// Hypothesis edits touching a perturbed span make the pair inconsistent on
/// either side. Otherwise the variant's edits, mapped back into original
/// coordinates, must equal the original's edits exactly.
pub fn pair_consistent(case: &GecCase, index: usize, hyps: &HypothesisSet) -> Result<bool> {
    if index == 0 || index > case.variants.len() {
        return Err(Error::IndexOutOfRange {
            index,
            size: case.num_sentences(),
        });
    }
    let e0 = original_edits(case, hyps)?;
    let (ei, map) = variant_edits(case, index, hyps)?;
    Ok(pair_verdict(&e0, &ei, &map))
}

fn pair_verdict(e0: &[Edit], ei: &SentenceEdits, map: &PerturbationMap) -> bool {
    !ei.has_boundary && !e0.iter().any(|e| map.touches_original(e)) && ei.in_original == e0
}

/// Scores one case: sentence counts, bounds and consistency verdicts.
pub fn evaluate_case(case: &GecCase, hyps: &HypothesisSet, opts: EvalOptions) -> Result<CaseEvaluation> {
    let counts = (0..case.num_sentences())
        .map(|k| sentence_counts(case, k, hyps, opts.beta))
        .collect::<Result<Vec<_>>>()?;
    let sentence_f: Vec<f64> = counts.iter().map(|&c| f_beta(c, opts.beta).f).collect();
    let bounds = bounds_from_scores(&sentence_f);

    let e0 = original_edits(case, hyps)?;
    let mut per_variant = Vec::with_capacity(case.variants.len());
    for index in 1..=case.variants.len() {
        per_variant.push(variant_edits(case, index, hyps)?);
    }
    let consistent: Vec<bool> = per_variant.iter().map(|(ei, map)| pair_verdict(&e0, ei, map)).collect();

    let all_vs_original = consistent.iter().all(|&c| c);
    let case_consistent = match opts.mode {
        ConsistencyMode::VsOriginal => all_vs_original,
        ConsistencyMode::Mutual => {
            all_vs_original
                && per_variant.iter().enumerate().all(|(i, (ei, mi))| {
                    per_variant[i + 1..].iter().all(|(ej, mj)| {
                        !ei.has_boundary
                            && !ej.has_boundary
                            && !ei.in_original.iter().any(|e| mj.touches_original(e))
                            && !ej.in_original.iter().any(|e| mi.touches_original(e))
                            && ei.in_original == ej.in_original
                    })
                })
        }
    };

    Ok(CaseEvaluation {
        case_id: case.case_id.clone(),
        origin: case.origin,
        counts,
        sentence_f,
        upper: bounds.upper_index,
        lower: bounds.lower_index,
        consistent,
        case_consistent,
    })
}

pub fn evaluate_cases(cases: &[GecCase], hyps: &HypothesisSet, opts: EvalOptions) -> Result<Vec<CaseEvaluation>> {
    cases.par_iter().map(|c| evaluate_case(c, hyps, opts)).collect()
}

/// Which sentence of each case a corpus score aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantSelector {
    Original,
    Upper,
    Lower,
    /// A fixed variant index; cases without it are skipped.
    Index(usize),
}

/// Micro-aggregated counts over the selected sentence of each case.
pub fn aggregate<'a>(evals: impl IntoIterator<Item = &'a CaseEvaluation>, selector: VariantSelector) -> Counts {
    evals
        .into_iter()
        .filter_map(|e| match selector {
            VariantSelector::Original => e.counts.first().copied(),
            VariantSelector::Upper => Some(e.counts[e.upper]),
            VariantSelector::Lower => Some(e.counts[e.lower]),
            VariantSelector::Index(k) => e.counts.get(k).copied(),
        })
        .sum()
}

pub fn score_corpus(
    cases: &[GecCase],
    hyps: &HypothesisSet,
    selector: VariantSelector,
    beta: f64,
) -> Result<Prf<f64>> {
    let opts = EvalOptions {
        beta,
        ..EvalOptions::default()
    };
    let evals = evaluate_cases(cases, hyps, opts)?;
    Ok(f_beta(aggregate(&evals, selector), beta))
}

/// Consistent and total counts behind CRS and P-CRS.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConsistencyTally {
    pub cases: usize,
    pub consistent_cases: usize,
    pub pairs: usize,
    pub consistent_pairs: usize,
}

impl ConsistencyTally {
    pub fn from_evaluations<'a>(evals: impl IntoIterator<Item = &'a CaseEvaluation>) -> Self {
        evals.into_iter().fold(ConsistencyTally::default(), |t, e| ConsistencyTally {
            cases: t.cases + 1,
            consistent_cases: t.consistent_cases + usize::from(e.case_consistent),
            pairs: t.pairs + e.consistent.len(),
            consistent_pairs: t.consistent_pairs + e.consistent_pairs(),
        })
    }

    pub fn crs(&self) -> Result<f64> {
        if self.cases == 0 {
            return Err(Error::EmptyCorpus);
        }
        Ok(percentage(self.consistent_cases, self.cases))
    }

    /// A corpus without perturbed pairs is vacuously consistent.
    pub fn p_crs(&self) -> Result<f64> {
        if self.cases == 0 {
            return Err(Error::EmptyCorpus);
        }
        if self.pairs == 0 {
            return Ok(100.0);
        }
        Ok(percentage(self.consistent_pairs, self.pairs))
    }
}

pub(crate) fn percentage(num: usize, den: usize) -> f64 {
    100.0 * num as f64 / den as f64
}

pub fn crs(cases: &[GecCase], hyps: &HypothesisSet, mode: ConsistencyMode) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let opts = EvalOptions { mode, ..EvalOptions::default() };
    ConsistencyTally::from_evaluations(&evaluate_cases(cases, hyps, opts)?).crs()
}

pub fn p_crs(cases: &[GecCase], hyps: &HypothesisSet) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    ConsistencyTally::from_evaluations(&evaluate_cases(cases, hyps, EvalOptions::default())?).p_crs()
}
