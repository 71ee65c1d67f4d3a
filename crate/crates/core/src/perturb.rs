//! Synthetic context perturbations and structural faithfulness audits.

use std::collections::HashMap;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{diff, PerturbationMap};
use crate::analysis::Action;
use crate::error::{Error, Result};
use crate::types::{Edit, GecCase, GecSample, Origin, VariantSpec};

/// Proposes replacement words for a slot.
///
/// `original` is the token being replaced, or `""` when asking for a word to
/// insert between `left` and `right`. Results are ranked best first, never
/// contain `original`, and never contain empty or whitespace-bearing tokens.
pub trait CandidateProvider: Send + Sync {
    fn candidates(&self, left: &[String], original: &str, right: &[String], rng: &mut dyn RngCore) -> Vec<String>;
}

const MAX_CANDIDATES: usize = 5;

fn valid_token(w: &str) -> bool {
    !w.is_empty() && !w.chars().any(char::is_whitespace)
}

/// Draws words uniformly from a vocabulary.
#[derive(Debug, Clone)]
pub struct UniformVocab {
    words: Vec<String>,
}

impl UniformVocab {
    pub fn new(words: impl IntoIterator<Item = String>) -> Self {
        let mut words: Vec<String> = words.into_iter().filter(|w| valid_token(w)).collect();
        words.sort();
        words.dedup();
        UniformVocab { words }
    }
}

impl CandidateProvider for UniformVocab {
    fn candidates(&self, _left: &[String], original: &str, _right: &[String], rng: &mut dyn RngCore) -> Vec<String> {
        self.words
            .choose_multiple(rng, MAX_CANDIDATES + 1)
            .filter(|w| *w != original)
            .take(MAX_CANDIDATES)
            .cloned()
            .collect()
    }
}

/// Draws words in proportion to their counts.
#[derive(Debug, Clone)]
pub struct FrequencyWeighted {
    words: Vec<String>,
    dist: Option<WeightedIndex<u64>>,
}

impl FrequencyWeighted {
    pub fn new(vocab: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut merged: HashMap<String, u64> = HashMap::new();
        for (w, c) in vocab {
            if valid_token(&w) && c > 0 {
                *merged.entry(w).or_default() += c;
            }
        }
        let mut entries: Vec<(String, u64)> = merged.into_iter().collect();
        entries.sort();
        let dist = WeightedIndex::new(entries.iter().map(|e| e.1)).ok();
        FrequencyWeighted {
            words: entries.into_iter().map(|e| e.0).collect(),
            dist,
        }
    }
}

impl CandidateProvider for FrequencyWeighted {
    fn candidates(&self, _left: &[String], original: &str, _right: &[String], rng: &mut dyn RngCore) -> Vec<String> {
        let Some(dist) = &self.dist else {
            return Vec::new();
        };
        let mut out: Vec<String> = Vec::new();
        for _ in 0..16 * MAX_CANDIDATES {
            let w = &self.words[dist.sample(rng)];
            if w != original && !out.contains(w) {
                out.push(w.clone());
                if out.len() == MAX_CANDIDATES {
                    break;
                }
            }
        }
        out
    }
}

/// Substitution candidates read from a `word<TAB>c1,c2,...` file, falling
/// back to another provider for insertions and unlisted words.
pub struct CandidateFile {
    map: HashMap<String, Vec<String>>,
    fallback: Box<dyn CandidateProvider>,
}

impl CandidateFile {
    pub fn new(map: HashMap<String, Vec<String>>, fallback: Box<dyn CandidateProvider>) -> Self {
        CandidateFile { map, fallback }
    }
}

impl CandidateProvider for CandidateFile {
    fn candidates(&self, left: &[String], original: &str, right: &[String], rng: &mut dyn RngCore) -> Vec<String> {
        let listed: Vec<String> = self
            .map
            .get(original)
            .into_iter()
            .flatten()
            .filter(|w| *w != original && valid_token(w))
            .cloned()
            .collect();
        if listed.is_empty() {
            self.fallback.candidates(left, original, right, rng)
        } else {
            listed
        }
    }
}

/// Relative odds of substitution, insertion and deletion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionWeights {
    pub substitute: f64,
    pub insert: f64,
    pub delete: f64,
}

impl Default for ActionWeights {
    fn default() -> Self {
        ActionWeights {
            substitute: 1.0,
            insert: 1.0,
            delete: 1.0,
        }
    }
}

impl ActionWeights {
    fn distribution(&self) -> Result<WeightedIndex<f64>> {
        let w = [self.substitute, self.insert, self.delete];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config(format!("action weights must be finite and non-negative, got {w:?}")));
        }
        WeightedIndex::new(w).map_err(|e| Error::Config(format!("invalid action weights {w:?}: {e}")))
    }
}

impl FromStr for ActionWeights {
    type Err = Error;

    /// Parses `s,i,d`, e.g. `1,1,1`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("weights {s:?} are not numbers")))?;
        let [substitute, insert, delete] = parts[..] else {
            return Err(Error::Config(format!("expected three weights s,i,d, got {s:?}")));
        };
        let w = ActionWeights {
            substitute,
            insert,
            delete,
        };
        w.distribution()?;
        Ok(w)
    }
}

/// Produces one perturbation edit that avoids every reference error span.
///
/// The action is drawn first; the site is then uniform among legal sites for
/// that action. Deterministic for a given seed and provider.
pub fn generate_perturbation(
    sample: &GecSample,
    seed: u64,
    provider: &dyn CandidateProvider,
    weights: ActionWeights,
) -> Result<Edit> {
    let dist = weights.distribution()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fail = |reason: String| Error::Generation {
        sample_id: sample.id.clone(),
        reason,
    };
    let tokens = sample.source.tokens();
    let errors: Vec<&Edit> = sample.error_edits().collect();
    let free_tokens: Vec<usize> = (0..tokens.len()).filter(|&i| !sample.is_error_token(i)).collect();
    if free_tokens.is_empty() {
        return Err(fail("no token lies outside the reference error spans".into()));
    }
    let legal = |e: &Edit| !errors.iter().any(|err| err.overlaps(e));

    let action = Action::ALL[dist.sample(&mut rng)];
    let edit = match action {
        Action::Delete => {
            let &i = free_tokens.choose(&mut rng).expect("non-empty");
            Edit::new(i, i + 1, Vec::<String>::new())
        }
        Action::Substitute => {
            let &i = free_tokens.choose(&mut rng).expect("non-empty");
            let cands = provider.candidates(&tokens[..i], &tokens[i], &tokens[i + 1..], &mut rng);
            let word = cands
                .into_iter()
                .find(|w| *w != tokens[i] && valid_token(w))
                .ok_or_else(|| fail(format!("no substitution candidate for {:?}", tokens[i])))?;
            Edit::new(i, i + 1, [word])
        }
        Action::Insert => {
            let sites: Vec<usize> = (0..=tokens.len())
                .filter(|&p| legal(&Edit::new(p, p, ["_"])))
                .collect();
            let &p = sites.choose(&mut rng).ok_or_else(|| fail("no legal insertion point".into()))?;
            let cands = provider.candidates(&tokens[..p], "", &tokens[p..], &mut rng);
            let word = cands
                .into_iter()
                .find(|w| valid_token(w))
                .ok_or_else(|| fail("no insertion candidate".into()))?;
            Edit::new(p, p, [word])
        }
    };
    debug_assert!(legal(&edit));
    Ok(edit)
}

/// Derives the seed used for the sample at `ordinal`, so that parallel and
/// serial generation agree.
pub fn sample_seed(seed: u64, ordinal: usize) -> u64 {
    seed ^ ordinal as u64
}

/// Builds `k` single-edit variants for every sample.
///
/// Samples that cannot be perturbed are skipped; the returned warnings name
/// them.
pub fn build_synthetic_corpus(
    samples: &[GecSample],
    k: usize,
    seed: u64,
    provider: &dyn CandidateProvider,
    weights: ActionWeights,
) -> Result<(Vec<GecCase>, Vec<String>)> {
    weights.distribution()?;
    let results: Vec<Result<GecCase>> = samples
        .par_iter()
        .enumerate()
        .map(|(ordinal, sample)| {
            let mut seeds = ChaCha8Rng::seed_from_u64(sample_seed(seed, ordinal));
            let mut variants = Vec::with_capacity(k);
            for j in 1..=k {
                let edit = generate_perturbation(sample, seeds.random(), provider, weights)?;
                let source = crate::align::apply_edits(&sample.source, std::slice::from_ref(&edit))?;
                variants.push(VariantSpec {
                    id: format!("{}-{j}", sample.id),
                    source,
                    perturbation: vec![edit],
                });
            }
            GecCase::new(sample.id.clone(), Origin::Other, sample.clone(), variants)
        })
        .collect();

    let mut cases = Vec::with_capacity(samples.len());
    let mut warnings = Vec::new();
    for r in results {
        match r {
            Ok(c) => cases.push(c),
            Err(e @ Error::Generation { .. }) => {
                let msg = format!("skipped: {e}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            Err(e) => return Err(e),
        }
    }
    Ok((cases, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    OverlapsErrorSpan,
    AltersReferenceEdit,
    EmptyPerturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based variant index.
    pub variant: usize,
    /// The offending perturbation edit, or the reference edit that could not
    /// be carried over; absent for empty perturbations.
    pub edit: Option<Edit>,
    pub reason: ViolationReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub structural_violations: Vec<Violation>,
    /// Structural checks cannot see semantic damage (removing evidence for an
    /// error, say), so every real perturbation still wants a human look.
    pub needs_human_review: bool,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.structural_violations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditOptions {
    /// Flag variants that are identical to the original.
    pub require_perturbation: bool,
}

/// Audits one perturbation of `original`, reporting under variant number
/// `variant`.
pub fn audit_variant(original: &GecSample, perturbation: &[Edit], variant: usize, opts: AuditOptions) -> Vec<Violation> {
    let mut out = Vec::new();
    if perturbation.is_empty() && opts.require_perturbation {
        out.push(Violation {
            variant,
            edit: None,
            reason: ViolationReason::EmptyPerturbation,
        });
    }
    let errors: Vec<&Edit> = original.error_edits().collect();
    for p in perturbation {
        if errors.iter().any(|e| e.overlaps(p)) {
            out.push(Violation {
                variant,
                edit: Some(p.clone()),
                reason: ViolationReason::OverlapsErrorSpan,
            });
        }
    }
    let map = PerturbationMap::new(perturbation);
    let mut seen: Vec<&Edit> = Vec::new();
    for e in original.error_edits() {
        if map.to_perturbed(e).is_none() && !seen.contains(&e) {
            seen.push(e);
            out.push(Violation {
                variant,
                edit: Some(e.clone()),
                reason: ViolationReason::AltersReferenceEdit,
            });
        }
    }
    out
}

/// Audits every variant of a case loaded without faithfulness checks.
pub fn audit_faithfulness(case: &GecCase, opts: AuditOptions) -> AuditReport {
    let mut report = AuditReport::default();
    for (vi, p) in case.perturbations.iter().enumerate() {
        report
            .structural_violations
            .extend(audit_variant(&case.original, p, vi + 1, opts));
        report.needs_human_review |= !p.is_empty();
    }
    report
}

/// Result of checking a proposed perturbed sentence against its original.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantCheck {
    pub edits: Vec<Edit>,
    pub actions: Vec<Action>,
    pub audit: AuditReport,
}

/// Aligns a proposed perturbed sentence with the original and audits the
/// resulting edits.
pub fn check_perturbed(original: &GecSample, perturbed: &[String], variant: usize, opts: AuditOptions) -> VariantCheck {
    let edits = diff(&original.source, perturbed);
    let audit = AuditReport {
        structural_violations: audit_variant(original, &edits, variant, opts),
        needs_human_review: !edits.is_empty(),
    };
    VariantCheck {
        actions: edits.iter().map(Action::of).collect(),
        edits,
        audit,
    }
}
