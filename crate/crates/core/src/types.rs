//! Domain types shared by every module: token sequences, span edits,
//! reference-annotated samples and perturbation cases.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::align;
use crate::error::{Error, Result};

/// A whitespace-tokenized sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Splits on runs of whitespace. Never produces empty tokens.
    pub fn split(text: &str) -> Self {
        TokenSeq(text.split_whitespace().map(str::to_owned).collect())
    }

    /// Builds a sequence from explicit tokens, rejecting empty tokens and
    /// tokens that contain whitespace.
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::validation(format!("token {i}"), "empty token"));
            }
            if tok.chars().any(char::is_whitespace) {
                return Err(Error::validation(
                    format!("token {i}"),
                    format!("token {tok:?} contains whitespace"),
                ));
            }
        }
        Ok(TokenSeq(tokens))
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join())
    }
}

impl<'de> Deserialize<'de> for TokenSeq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        TokenSeq::new(tokens).map_err(serde::de::Error::custom)
    }
}

/// Whitespace tokenization; the only tokenizer the toolkit uses.
pub fn split_tokens(text: &str) -> TokenSeq {
    TokenSeq::split(text)
}

/// Rewrite of the half-open token span `start..end` into `replacement`.
///
/// `start == end` is an insertion, an empty replacement a deletion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
}

impl Edit {
    pub fn new<S: Into<String>>(
        start: usize,
        end: usize,
        replacement: impl IntoIterator<Item = S>,
    ) -> Self {
        debug_assert!(start <= end);
        Edit {
            start,
            end,
            replacement: replacement.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_insertion(&self) -> bool {
        self.start == self.end
    }

    pub fn is_deletion(&self) -> bool {
        self.replacement.is_empty()
    }

    pub fn span_len(&self) -> usize {
        self.end - self.start
    }

    /// Change in sequence length caused by applying this edit.
    pub fn length_delta(&self) -> isize {
        self.replacement.len() as isize - self.span_len() as isize
    }

    pub fn overlaps(&self, other: &Edit) -> bool {
        spans_overlap((self.start, self.end), (other.start, other.end))
    }

    /// The edit that undoes `self` once it has been applied to `source`.
    pub fn inverse(&self, source: &[String]) -> Edit {
        Edit {
            start: self.start,
            end: self.start + self.replacement.len(),
            replacement: source[self.start..self.end].to_vec(),
        }
    }

    pub fn is_noop_on(&self, source: &[String]) -> bool {
        self.end <= source.len() && source[self.start..self.end] == self.replacement[..]
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},[{}])", self.start, self.end, self.replacement.join(","))
    }
}

#[derive(Serialize, Deserialize)]
struct EditRepr {
    start: usize,
    end: usize,
    replacement: String,
}

impl Serialize for Edit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EditRepr {
            start: self.start,
            end: self.end,
            replacement: self.replacement.join(" "),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Edit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = EditRepr::deserialize(d)?;
        if raw.start > raw.end {
            return Err(serde::de::Error::custom(format!(
                "edit start {} exceeds end {}",
                raw.start, raw.end
            )));
        }
        Ok(Edit {
            start: raw.start,
            end: raw.end,
            replacement: TokenSeq::split(&raw.replacement).into_tokens(),
        })
    }
}

/// Overlap test for half-open token spans.
///
/// Two non-empty spans overlap when they share a token. An empty span is an
/// insertion point: it overlaps a non-empty span only when it falls strictly
/// inside it, and another insertion point only when both are the same point.
pub fn spans_overlap(a: (usize, usize), b: (usize, usize)) -> bool {
    let (a_start, a_end) = a;
    let (b_start, b_end) = b;
    match (a_start == a_end, b_start == b_end) {
        (false, false) => a_start < b_end && b_start < a_end,
        (true, false) => b_start < a_start && a_start < b_end,
        (false, true) => a_start < b_start && b_start < a_end,
        (true, true) => a_start == b_start,
    }
}

/// Checks that `edits` are in bounds for `source`, sorted, pairwise
/// non-overlapping, free of no-ops and made of well-formed tokens.
pub fn check_edits(edits: &[Edit], source: &[String], context: &str) -> Result<()> {
    check_layout(edits, source.len(), context)?;
    for e in edits {
        if e.is_noop_on(source) {
            return Err(Error::validation(context, format!("edit {e} is a no-op")));
        }
        if e.replacement.iter().any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::validation(context, format!("edit {e} has malformed tokens")));
        }
    }
    Ok(())
}

/// Bounds, ordering and overlap checks only.
pub fn check_layout(edits: &[Edit], len: usize, context: &str) -> Result<()> {
    for (k, e) in edits.iter().enumerate() {
        if e.start > e.end || e.end > len {
            return Err(Error::validation(
                context,
                format!("edit {e} out of bounds for {len} tokens"),
            ));
        }
        if k > 0 {
            let prev = &edits[k - 1];
            if prev.end > e.start || (prev.is_insertion() && e.is_insertion() && prev.start == e.start)
            {
                return Err(Error::validation(
                    context,
                    format!("edits {prev} and {e} overlap or are out of order"),
                ));
            }
        }
    }
    Ok(())
}

/// One annotator's edits for a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub annotator: usize,
    pub edits: Vec<Edit>,
    /// Opaque error-type labels parallel to `edits`; empty when unknown.
    pub labels: Vec<String>,
}

impl Annotation {
    pub fn new(annotator: usize, edits: Vec<Edit>) -> Self {
        Annotation {
            annotator,
            edits,
            labels: Vec::new(),
        }
    }

    pub fn label(&self, k: usize) -> Option<&str> {
        self.labels.get(k).map(String::as_str)
    }
}

/// A source sentence with one or more reference annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GecSample {
    pub id: String,
    pub source: TokenSeq,
    pub references: Vec<Annotation>,
}

impl GecSample {
    pub fn new(id: impl Into<String>, source: TokenSeq, references: Vec<Annotation>) -> Result<Self> {
        let sample = GecSample {
            id: id.into(),
            source,
            references,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<()> {
        if self.references.is_empty() {
            return Err(Error::validation(
                format!("sample {}", self.id),
                "no reference annotations",
            ));
        }
        for ann in &self.references {
            check_edits(
                &ann.edits,
                &self.source,
                &format!("sample {}, annotator {}", self.id, ann.annotator),
            )?;
            if !ann.labels.is_empty() && ann.labels.len() != ann.edits.len() {
                return Err(Error::validation(
                    format!("sample {}, annotator {}", self.id, ann.annotator),
                    "label count differs from edit count",
                ));
            }
        }
        Ok(())
    }

    /// Corrected sentence according to the `annotation`-th reference.
    pub fn target(&self, annotation: usize) -> Result<TokenSeq> {
        let ann = self.references.get(annotation).ok_or(Error::IndexOutOfRange {
            index: annotation,
            size: self.references.len(),
        })?;
        align::apply_edits(&self.source, &ann.edits)
    }

    /// Every reference edit of every annotator, i.e. the error spans.
    pub fn error_edits(&self) -> impl Iterator<Item = &Edit> {
        self.references.iter().flat_map(|a| a.edits.iter())
    }

    /// Whether token `i` lies inside some non-empty error span.
    pub fn is_error_token(&self, i: usize) -> bool {
        self.error_edits().any(|e| e.start <= i && i < e.end)
    }
}

/// Corpus a case was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Conll14,
    Bea19,
    Tem8,
    Other,
}

impl Origin {
    pub const ALL: [Origin; 4] = [Origin::Conll14, Origin::Bea19, Origin::Tem8, Origin::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Conll14 => "conll14",
            Origin::Bea19 => "bea19",
            Origin::Tem8 => "tem8",
            Origin::Other => "other",
        }
    }
}

impl std::str::FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Origin::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown origin {s:?}")))
    }
}

/// One original sample and its perturbed variants.
///
/// Variant references are derived from the original's by mapping each
/// reference edit through the variant's perturbation edits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GecCase {
    pub case_id: String,
    pub origin: Origin,
    pub original: GecSample,
    pub variants: Vec<GecSample>,
    /// `perturbations[i]` rewrites `original.source` into `variants[i].source`.
    pub perturbations: Vec<Vec<Edit>>,
}

/// A variant as stored on disk: id, source text and perturbation edits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSpec {
    pub id: String,
    pub source: TokenSeq,
    pub perturbation: Vec<Edit>,
}

impl GecCase {
    /// Builds a case and enforces every case invariant, including
    /// faithfulness (no perturbation edit overlaps a reference error span).
    pub fn new(
        case_id: impl Into<String>,
        origin: Origin,
        original: GecSample,
        variants: Vec<VariantSpec>,
    ) -> Result<Self> {
        Self::build(case_id.into(), origin, original, variants, true)
    }

    /// Like [`GecCase::new`] but tolerates faithfulness violations so that an
    /// auditor can report them. Reference edits that cannot be mapped into a
    /// variant are dropped from that variant.
    pub fn new_unaudited(
        case_id: impl Into<String>,
        origin: Origin,
        original: GecSample,
        variants: Vec<VariantSpec>,
    ) -> Result<Self> {
        Self::build(case_id.into(), origin, original, variants, false)
    }

    fn build(
        case_id: String,
        origin: Origin,
        original: GecSample,
        variants: Vec<VariantSpec>,
        strict: bool,
    ) -> Result<Self> {
        original
            .validate()
            .map_err(|e| Error::validation(format!("case {case_id}"), e.to_string()))?;
        let mut built = Vec::with_capacity(variants.len());
        let mut perturbations = Vec::with_capacity(variants.len());
        for (vi, spec) in variants.into_iter().enumerate() {
            let variant_no = vi + 1;
            let ctx = format!("case {case_id}, variant {variant_no}");
            check_edits(&spec.perturbation, &original.source, &ctx)?;
            let applied = align::apply_edits(&original.source, &spec.perturbation)?;
            if applied != spec.source {
                return Err(Error::validation(
                    ctx,
                    format!(
                        "perturbations yield {:?}, variant source is {:?}",
                        applied.join(),
                        spec.source.join()
                    ),
                ));
            }
            if strict {
                for p in &spec.perturbation {
                    if let Some(err) = original.error_edits().find(|e| e.overlaps(p)) {
                        return Err(Error::Faithfulness {
                            case_id: case_id.clone(),
                            variant: variant_no,
                            edit: p.clone(),
                            error_span: err.clone(),
                        });
                    }
                }
            }
            let mut references = Vec::with_capacity(original.references.len());
            for ann in &original.references {
                let mut edits = Vec::with_capacity(ann.edits.len());
                let mut labels = Vec::new();
                for (k, e) in ann.edits.iter().enumerate() {
                    match align::map_edit(e, &spec.perturbation) {
                        Some(mapped) => {
                            edits.push(mapped);
                            if let Some(l) = ann.label(k) {
                                labels.push(l.to_owned());
                            }
                        }
                        None if strict => {
                            return Err(Error::validation(
                                ctx,
                                format!("reference edit {e} cannot be mapped through the perturbation"),
                            ));
                        }
                        None => {}
                    }
                }
                if labels.len() != edits.len() {
                    labels.clear();
                }
                references.push(Annotation {
                    annotator: ann.annotator,
                    edits,
                    labels,
                });
            }
            let variant = GecSample {
                id: spec.id,
                source: spec.source,
                references,
            };
            if strict {
                variant.validate()?;
            }
            built.push(variant);
            perturbations.push(spec.perturbation);
        }
        Ok(GecCase {
            case_id,
            origin,
            original,
            variants: built,
            perturbations,
        })
    }

    /// Number of scored sentences: the original plus every variant.
    pub fn num_sentences(&self) -> usize {
        self.variants.len() + 1
    }

    /// Sentence by variant index; 0 is the original.
    pub fn sentence(&self, index: usize) -> Option<&GecSample> {
        if index == 0 {
            Some(&self.original)
        } else {
            self.variants.get(index - 1)
        }
    }

    pub fn variant_specs(&self) -> Vec<VariantSpec> {
        self.variants
            .iter()
            .zip(&self.perturbations)
            .map(|(v, p)| VariantSpec {
                id: v.id.clone(),
                source: v.source.clone(),
                perturbation: p.clone(),
            })
            .collect()
    }
}

/// System outputs keyed by `(case_id, variant_index)`; index 0 is the original.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HypothesisSet {
    entries: BTreeMap<(String, usize), TokenSeq>,
}

impl HypothesisSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous entry when the key was already present.
    pub fn insert(&mut self, case_id: impl Into<String>, variant: usize, hyp: TokenSeq) -> Option<TokenSeq> {
        self.entries.insert((case_id.into(), variant), hyp)
    }

    pub fn get(&self, case_id: &str, variant: usize) -> Option<&TokenSeq> {
        self.entries.get(&(case_id.to_owned(), variant))
    }

    pub fn require(&self, case_id: &str, variant: usize) -> Result<&TokenSeq> {
        self.get(case_id, variant).ok_or_else(|| Error::MissingHypothesis {
            case_id: case_id.to_owned(),
            variant,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, &TokenSeq)> {
        self.entries.iter().map(|((c, v), h)| (c.as_str(), *v, h))
    }
}

/// Word occurrence counts from a training corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, count: u64) {
        self.counts.insert(word.into(), count);
    }

    /// Unseen words count 0.
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, c)| (w.as_str(), *c))
    }
}

impl FromIterator<(String, u64)> for FrequencyTable {
    fn from_iter<I: IntoIterator<Item = (String, u64)>>(iter: I) -> Self {
        FrequencyTable {
            counts: iter.into_iter().collect(),
        }
    }
}
