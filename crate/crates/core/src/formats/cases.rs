//! Case files: JSON Lines, one [`GecCase`] per line.
//!
//! Variant references are not stored; they are derived on load by mapping the
//! original's reference edits through each variant's perturbation edits.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Annotation, Edit, GecCase, GecSample, Origin, TokenSeq, VariantSpec};

#[derive(Debug, Serialize, Deserialize)]
struct CaseRecord {
    case_id: String,
    origin: Origin,
    original: OriginalRecord,
    variants: Vec<VariantRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OriginalRecord {
    id: String,
    source: String,
    references: Vec<Vec<Edit>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VariantRecord {
    id: String,
    source: String,
    perturbations: Vec<Edit>,
}

impl CaseRecord {
    fn from_case(case: &GecCase) -> Self {
        CaseRecord {
            case_id: case.case_id.clone(),
            origin: case.origin,
            original: OriginalRecord {
                id: case.original.id.clone(),
                source: case.original.source.join(),
                references: case.original.references.iter().map(|a| a.edits.clone()).collect(),
            },
            variants: case
                .variants
                .iter()
                .zip(&case.perturbations)
                .map(|(v, p)| VariantRecord {
                    id: v.id.clone(),
                    source: v.source.join(),
                    perturbations: p.clone(),
                })
                .collect(),
        }
    }

    fn into_case(self, strict: bool) -> Result<GecCase> {
        let references = self
            .original
            .references
            .into_iter()
            .enumerate()
            .map(|(k, edits)| Annotation::new(k, edits))
            .collect();
        let original = GecSample {
            id: self.original.id,
            source: TokenSeq::split(&self.original.source),
            references,
        };
        let variants = self
            .variants
            .into_iter()
            .map(|v| VariantSpec {
                id: v.id,
                source: TokenSeq::split(&v.source),
                perturbation: v.perturbations,
            })
            .collect();
        if strict {
            GecCase::new(self.case_id, self.origin, original, variants)
        } else {
            GecCase::new_unaudited(self.case_id, self.origin, original, variants)
        }
    }
}

/// Serializes one case as a single JSON line (no trailing newline).
pub fn case_to_json(case: &GecCase) -> String {
    serde_json::to_string(&CaseRecord::from_case(case)).expect("case records always serialize")
}

/// Parses and fully validates case JSONL.
pub fn parse_cases(text: &str) -> Result<Vec<GecCase>> {
    parse_with(text, true)
}

/// Parses case JSONL without the faithfulness check, for auditing.
pub fn parse_cases_unaudited(text: &str) -> Result<Vec<GecCase>> {
    parse_with(text, false)
}

fn parse_with(text: &str, strict: bool) -> Result<Vec<GecCase>> {
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: CaseRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(idx + 1, format!("schema violation: {e}")))?;
        if !seen.insert(record.case_id.clone()) {
            return Err(Error::validation(
                format!("case {}", record.case_id),
                format!("duplicate case_id on line {}", idx + 1),
            ));
        }
        cases.push(record.into_case(strict)?);
    }
    Ok(cases)
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<GecCase>> {
    let path = path.as_ref();
    parse_cases(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn load_cases_unaudited(path: impl AsRef<Path>) -> Result<Vec<GecCase>> {
    let path = path.as_ref();
    parse_cases_unaudited(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_cases<W: Write>(cases: &[GecCase], mut out: W) -> std::io::Result<()> {
    for case in cases {
        out.write_all(case_to_json(case).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn save_cases(cases: &[GecCase], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_cases(cases, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
