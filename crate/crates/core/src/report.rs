//! Corpus score reports and their canonical renderings.

use std::fmt::Write;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, evaluate_cases, f_beta, CaseEvaluation, ConsistencyMode, ConsistencyTally, Counts, EvalOptions,
    VariantSelector,
};
use crate::types::{GecCase, HypothesisSet, Origin};

/// Counts with the derived precision, recall and F-beta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    #[serde(flatten)]
    pub counts: Counts,
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl Score {
    pub fn from_counts(counts: Counts, beta: f64) -> Self {
        let prf = f_beta(counts, beta);
        Score {
            counts,
            p: prf.p,
            r: prf.r,
            f: prf.f,
        }
    }
}

/// Scores for the whole corpus or one origin subset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScopeReport {
    pub scope: String,
    pub cases: usize,
    pub pairs: usize,
    pub original: Score,
    pub upper: Score,
    pub lower: Score,
    pub delta_f: f64,
    /// Percentage.
    pub crs: f64,
    /// Percentage.
    pub p_crs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub beta: f64,
    pub consistency: &'static str,
    /// `total` first, then one entry per origin present in the corpus.
    pub scopes: Vec<ScopeReport>,
}

impl ScoreReport {
    pub fn scope(&self, name: &str) -> Option<&ScopeReport> {
        self.scopes.iter().find(|s| s.scope == name)
    }

    pub fn to_json(&self) -> String {
        canonical_json(self)
    }

    /// A table with one row per scope; scores are percentages.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Scope | Orig P | Orig R | Orig F | Upper P | Upper R | Upper F | Lower P | Lower R | Lower F | ΔF | CRS | P-CRS |\n");
        out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
        for s in &self.scopes {
            let _ = write!(out, "| {} ", s.scope);
            for score in [&s.original, &s.upper, &s.lower] {
                for v in [score.p, score.r, score.f] {
                    let _ = write!(out, "| {:.2} ", 100.0 * v);
                }
            }
            let _ = writeln!(out, "| {:.2} | {:.2} | {:.2} |", 100.0 * s.delta_f, s.crs, s.p_crs);
        }
        out
    }
}

fn scope_report(scope: &str, evals: &[&CaseEvaluation], beta: f64) -> Result<ScopeReport> {
    let pick = |selector| Score::from_counts(aggregate(evals.iter().copied(), selector), beta);
    let original = pick(VariantSelector::Original);
    let upper = pick(VariantSelector::Upper);
    let lower = pick(VariantSelector::Lower);
    let tally = ConsistencyTally::from_evaluations(evals.iter().copied());
    Ok(ScopeReport {
        scope: scope.to_owned(),
        cases: tally.cases,
        pairs: tally.pairs,
        original,
        upper,
        lower,
        delta_f: (upper.f - lower.f).abs(),
        crs: tally.crs()?,
        p_crs: tally.p_crs()?,
    })
}

/// Builds the report from per-case evaluations.
pub fn report_from_evaluations(evals: &[CaseEvaluation], opts: EvalOptions) -> Result<ScoreReport> {
    if evals.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let all: Vec<&CaseEvaluation> = evals.iter().collect();
    let mut scopes = vec![scope_report("total", &all, opts.beta)?];
    for origin in Origin::ALL {
        let subset: Vec<&CaseEvaluation> = evals.iter().filter(|e| e.origin == origin).collect();
        if !subset.is_empty() {
            scopes.push(scope_report(origin.as_str(), &subset, opts.beta)?);
        }
    }
    Ok(ScoreReport {
        beta: opts.beta,
        consistency: match opts.mode {
            ConsistencyMode::VsOriginal => "vs_original",
            ConsistencyMode::Mutual => "mutual",
        },
        scopes,
    })
}

pub fn build_report(cases: &[GecCase], hyps: &HypothesisSet, opts: EvalOptions) -> Result<ScoreReport> {
    if cases.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    report_from_evaluations(&evaluate_cases(cases, hyps, opts)?, opts)
}

/// Compact JSON with object keys sorted and every float rendered with four
/// decimals, so identical inputs give byte-identical output.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("report types serialize to JSON");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let x = n.as_f64().expect("f64 number");
                // avoid "-0.0000"
                let x = if x == 0.0 { 0.0 } else { x };
                let _ = write!(out, "{x:.4}");
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (k, item) in items.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (k, key) in keys.into_iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}
