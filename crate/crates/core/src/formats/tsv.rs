//! Tab-separated inputs: hypotheses, frequency tables, vocabularies and
//! substitution candidate lists.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{FrequencyTable, HypothesisSet, TokenSeq};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `case_id<TAB>variant_index<TAB>sentence` lines.
///
/// Duplicate keys keep the last row; each duplicate adds one warning.
pub fn parse_hypotheses(text: &str) -> Result<(HypothesisSet, Vec<String>)> {
    let mut set = HypothesisSet::new();
    let mut warnings = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (case_id, variant, sentence) = match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(v), Some(s)) if !c.is_empty() => (c, v, s),
            _ => return Err(Error::parse(line_no, "expected case_id<TAB>variant_index<TAB>sentence")),
        };
        let variant: usize = variant
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, format!("variant index {variant:?} is not an integer")))?;
        if set.insert(case_id, variant, TokenSeq::split(sentence)).is_some() {
            let msg = format!("line {line_no}: duplicate hypothesis for ({case_id}, {variant}); keeping the last");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok((set, warnings))
}

pub fn load_hypotheses(path: impl AsRef<Path>) -> Result<(HypothesisSet, Vec<String>)> {
    parse_hypotheses(&read(path.as_ref())?)
}

/// Parses `word<TAB>count` lines.
pub fn parse_frequency_table(text: &str) -> Result<FrequencyTable> {
    parse_counts(text, false).map(|rows| rows.into_iter().collect())
}

pub fn load_frequency_table(path: impl AsRef<Path>) -> Result<FrequencyTable> {
    parse_frequency_table(&read(path.as_ref())?)
}

/// Parses a vocabulary: one word per line, optionally followed by
/// `<TAB>count`. Missing counts default to 1.
pub fn parse_vocabulary(text: &str) -> Result<Vec<(String, u64)>> {
    parse_counts(text, true)
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vec<(String, u64)>> {
    parse_vocabulary(&read(path.as_ref())?)
}

fn parse_counts(text: &str, count_optional: bool) -> Result<Vec<(String, u64)>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let word = fields.next().unwrap_or_default().trim();
        let count = match fields.next() {
            Some(c) => c
                .trim()
                .parse()
                .map_err(|_| Error::parse(idx + 1, format!("count {c:?} is not a non-negative integer")))?,
            None if count_optional => 1,
            None => return Err(Error::parse(idx + 1, "expected word<TAB>count")),
        };
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::parse(idx + 1, format!("invalid word {word:?}")));
        }
        rows.push((word.to_owned(), count));
    }
    Ok(rows)
}

/// Parses `word<TAB>candidate1,candidate2,...` lines.
pub fn parse_candidates(text: &str) -> Result<HashMap<String, Vec<String>>> {
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (word, cands) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(idx + 1, "expected word<TAB>candidates"))?;
        let cands = cands
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_owned)
            .collect();
        map.insert(word.trim().to_owned(), cands);
    }
    Ok(map)
}

pub fn load_candidates(path: impl AsRef<Path>) -> Result<HashMap<String, Vec<String>>> {
    parse_candidates(&read(path.as_ref())?)
}
