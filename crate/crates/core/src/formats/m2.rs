//! M2 reference files.
//!
//! ```text
//! S I have a lot of friend .
//! A 5 6|||R:NOUN:NUM|||friends|||REQUIRED|||-NONE-|||0
//! ```

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};
use crate::types::{Annotation, Edit, GecSample, TokenSeq};

const SEP: &str = "|||";
const NONE: &str = "-NONE-";
const NOOP: &str = "noop";

/// Parses M2 text into samples. Sample ids are the 0-based block ordinal.
pub fn parse_m2(text: &str) -> Result<Vec<GecSample>> {
    let mut samples = Vec::new();
    let mut block: Option<Block> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                samples.push(b.finish(samples.len())?);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("S ").or_else(|| (line == "S").then_some("")) {
            if let Some(b) = block.take() {
                samples.push(b.finish(samples.len())?);
            }
            block = Some(Block::new(line_no, TokenSeq::split(rest)));
        } else if let Some(rest) = line.strip_prefix("A ") {
            let b = block
                .as_mut()
                .ok_or_else(|| Error::parse(line_no, "annotation line before any S line"))?;
            b.push(line_no, rest)?;
        } else {
            return Err(Error::parse(line_no, format!("unrecognized line {line:?}")));
        }
    }
    if let Some(b) = block.take() {
        samples.push(b.finish(samples.len())?);
    }
    Ok(samples)
}

struct Block {
    line: usize,
    source: TokenSeq,
    annotators: BTreeMap<usize, Vec<(Edit, String)>>,
}

impl Block {
    fn new(line: usize, source: TokenSeq) -> Self {
        Block {
            line,
            source,
            annotators: BTreeMap::new(),
        }
    }

    fn push(&mut self, line_no: usize, rest: &str) -> Result<()> {
        let fields: Vec<&str> = rest.split(SEP).collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                line_no,
                format!("expected 6 |||-separated fields, found {}", fields.len()),
            ));
        }
        let mut span = fields[0].split_whitespace();
        let (start, end) = match (span.next(), span.next(), span.next()) {
            (Some(s), Some(e), None) => (parse_index(line_no, s)?, parse_index(line_no, e)?),
            _ => return Err(Error::parse(line_no, format!("bad span {:?}", fields[0]))),
        };
        let kind = fields[1].trim();
        let annotator: usize = fields[5]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line_no, format!("bad annotator id {:?}", fields[5])))?;
        let entry = self.annotators.entry(annotator).or_default();
        if kind == NOOP {
            return Ok(());
        }
        let (start, end) = match (start, end) {
            (Some(s), Some(e)) if s <= e => (s, e),
            _ => {
                return Err(Error::parse(
                    line_no,
                    format!("invalid span {:?} for a {kind} edit", fields[0]),
                ))
            }
        };
        let replacement = match fields[2].trim() {
            NONE | "" => Vec::new(),
            text => TokenSeq::split(text).into_tokens(),
        };
        entry.push((
            Edit {
                start,
                end,
                replacement,
            },
            kind.to_owned(),
        ));
        Ok(())
    }

    fn finish(self, ordinal: usize) -> Result<GecSample> {
        let mut references: Vec<Annotation> = self
            .annotators
            .into_iter()
            .map(|(annotator, mut pairs)| {
                pairs.sort_by_key(|x| (x.0.start, x.0.end));
                let (edits, labels) = pairs.into_iter().unzip();
                Annotation {
                    annotator,
                    edits,
                    labels,
                }
            })
            .collect();
        if references.is_empty() {
            references.push(Annotation::new(0, Vec::new()));
        }
        GecSample::new(ordinal.to_string(), self.source, references).map_err(|e| match e {
            Error::Validation { message, .. } => {
                Error::validation(format!("M2 block at line {}", self.line), message)
            }
            other => other,
        })
    }
}

/// `-1` is the M2 convention for "no span".
fn parse_index(line_no: usize, s: &str) -> Result<Option<usize>> {
    if s == "-1" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::parse(line_no, format!("bad token index {s:?}")))
}

/// Renders samples back into M2. Unlabelled edits are written as `UNK`.
pub fn write_m2(samples: &[GecSample]) -> String {
    let mut out = String::new();
    for (k, sample) in samples.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "S {}", sample.source.join());
        for ann in &sample.references {
            if ann.edits.is_empty() {
                let _ = writeln!(out, "A -1 -1{SEP}{NOOP}{SEP}{NONE}{SEP}REQUIRED{SEP}{NONE}{SEP}{}", ann.annotator);
                continue;
            }
            for (i, e) in ann.edits.iter().enumerate() {
                let repl = if e.replacement.is_empty() {
                    NONE.to_owned()
                } else {
                    e.replacement.join(" ")
                };
                let label = ann.label(i).unwrap_or("UNK");
                let _ = writeln!(
                    out,
                    "A {} {}{SEP}{label}{SEP}{repl}{SEP}REQUIRED{SEP}{NONE}{SEP}{}",
                    e.start, e.end, ann.annotator
                );
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edit_block() {
        let s = parse_m2("S I have a lot of friend .\nA 5 6|||R:NOUN:NUM|||friends|||REQUIRED|||-NONE-|||0").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].references.len(), 1);
        assert_eq!(s[0].references[0].edits, vec![Edit::new(5, 6, ["friends"])]);
        assert_eq!(s[0].references[0].labels, vec!["R:NOUN:NUM".to_owned()]);
    }

    #[test]
    fn noop_block_has_no_edits() {
        let s = parse_m2("S A .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0").unwrap();
        assert_eq!(s[0].references.len(), 1);
        assert!(s[0].references[0].edits.is_empty());
    }

    #[test]
    fn groups_by_annotator() {
        let text = "S He go to school .\n\
                    A 1 2|||R:VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\n\
                    A 1 2|||R:VERB:TENSE|||went|||REQUIRED|||-NONE-|||1\n\
                    A 3 3|||M:DET|||the|||REQUIRED|||-NONE-|||1\n\
                    \n\
                    S Fine .\n";
        let s = parse_m2(text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].references.len(), 2);
        assert_eq!(s[0].references[0].annotator, 0);
        assert_eq!(s[0].references[1].edits, vec![Edit::new(1, 2, ["went"]), Edit::new(3, 3, ["the"])]);
        assert_eq!(s[1].id, "1");
        assert!(s[1].references[0].edits.is_empty());
    }

    #[test]
    fn deletion_uses_none_marker() {
        let s = parse_m2("S a b c\nA 1 2|||U:NOUN|||-NONE-|||REQUIRED|||-NONE-|||0\n").unwrap();
        assert!(s[0].references[0].edits[0].is_deletion());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_m2("S a b\nA 0 1|||R|||x|||REQUIRED\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_m2("S a b\nQ nonsense\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_m2("A 0 1|||R|||x|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn out_of_bounds_span_names_block() {
        let err = parse_m2("S a b\n\nS c d\nA 1 5|||R|||x|||REQUIRED|||-NONE-|||0\n").unwrap_err();
        match err {
            Error::Validation { context, .. } => assert!(context.contains("line 3"), "{context}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn write_then_parse_preserves_content() {
        let text = "S He go to school .\n\
                    A 1 2|||R:VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\n\
                    A 3 3|||M:DET|||the|||REQUIRED|||-NONE-|||2\n\
                    \n\
                    S Fine .\n\
                    A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n";
        let parsed = parse_m2(text).unwrap();
        let again = parse_m2(&write_m2(&parsed)).unwrap();
        assert_eq!(parsed, again);
    }
}
