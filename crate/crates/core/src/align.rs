//! Token-level alignment, edit extraction and coordinate mapping.
//!
//! Costs are kept in integer tenths so that path costs compare exactly:
//! match 0, case-only substitution 1 (0.1), substitution, deletion and
//! insertion 10 (1.0).

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{check_layout, spans_overlap, Edit, TokenSeq};

/// Alignment cost in tenths of a unit edit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cost(pub u32);

impl Cost {
    pub const MATCH: Cost = Cost(0);
    pub const CASE_SUBSTITUTE: Cost = Cost(1);
    pub const SUBSTITUTE: Cost = Cost(10);
    pub const DELETE: Cost = Cost(10);
    pub const INSERT: Cost = Cost(10);

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 10.0
    }
}

impl std::ops::Add for Cost {
    type Output = Cost;

    fn add(self, rhs: Cost) -> Cost {
        Cost(self.0 + rhs.0)
    }
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 10, self.0 % 10)
    }
}

/// Cost of rewriting `x` into `y` in place.
pub fn substitution_cost(x: &str, y: &str) -> Cost {
    if x == y {
        Cost::MATCH
    } else if x.to_lowercase() == y.to_lowercase() {
        Cost::CASE_SUBSTITUTE
    } else {
        Cost::SUBSTITUTE
    }
}

/// One step of an alignment; `a` indexes the first sequence, `b` the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum AlignOp {
    Match { a: usize, b: usize },
    Substitute { a: usize, b: usize },
    Delete { a: usize },
    Insert { b: usize },
}

impl AlignOp {
    pub fn is_match(self) -> bool {
        matches!(self, AlignOp::Match { .. })
    }
}

/// How non-match operations are grouped into edits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MergeStrategy {
    /// Each maximal run of consecutive non-match operations becomes one edit.
    #[default]
    MaximalRun,
    /// One edit per substitution or deletion; consecutive insertions at the
    /// same point stay together.
    AllSplit,
}

/// A minimum-cost alignment path between two token sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment<'s> {
    a: &'s [String],
    b: &'s [String],
    ops: Vec<AlignOp>,
    cost: Cost,
}

impl<'s> Alignment<'s> {
    pub fn ops(&self) -> &[AlignOp] {
        &self.ops
    }

    pub fn cost(&self) -> Cost {
        self.cost
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.as_f64()
    }

    pub fn source(&self) -> &'s [String] {
        self.a
    }

    pub fn target(&self) -> &'s [String] {
        self.b
    }

    pub fn edits(&self) -> Vec<Edit> {
        extract_edits_with(self, MergeStrategy::MaximalRun)
    }

    /// Position pairs `(a, b)` of every match, in order.
    pub fn matches(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ops.iter().filter_map(|op| match *op {
            AlignOp::Match { a, b } => Some((a, b)),
            _ => None,
        })
    }

    /// Sum of per-op costs recomputed from the path.
    pub fn recomputed_cost(&self) -> Cost {
        self.ops.iter().fold(Cost::MATCH, |acc, op| {
            acc + match *op {
                AlignOp::Match { .. } => Cost::MATCH,
                AlignOp::Substitute { a, b } => substitution_cost(&self.a[a], &self.b[b]),
                AlignOp::Delete { .. } => Cost::DELETE,
                AlignOp::Insert { .. } => Cost::INSERT,
            }
        })
    }
}

/// Aligns `a` to `b` by dynamic programming.
///
/// Ties between equally cheap predecessors are broken during the backtrace in
/// the order match, substitute, delete, insert.
pub fn align<'s>(a: &'s [String], b: &'s [String]) -> Alignment<'s> {
    let (n, m) = (a.len(), b.len());
    let width = m + 1;
    let mut dp = vec![0u32; (n + 1) * width];
    for j in 1..=m {
        dp[j] = dp[j - 1] + Cost::INSERT.0;
    }
    for i in 1..=n {
        dp[i * width] = dp[(i - 1) * width] + Cost::DELETE.0;
        for j in 1..=m {
            let diag = dp[(i - 1) * width + j - 1] + substitution_cost(&a[i - 1], &b[j - 1]).0;
            let up = dp[(i - 1) * width + j] + Cost::DELETE.0;
            let left = dp[i * width + j - 1] + Cost::INSERT.0;
            dp[i * width + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let sub = substitution_cost(&a[i - 1], &b[j - 1]);
            if here == dp[(i - 1) * width + j - 1] + sub.0 {
                ops.push(if sub == Cost::MATCH {
                    AlignOp::Match { a: i - 1, b: j - 1 }
                } else {
                    AlignOp::Substitute { a: i - 1, b: j - 1 }
                });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[(i - 1) * width + j] + Cost::DELETE.0 {
            ops.push(AlignOp::Delete { a: i - 1 });
            i -= 1;
        } else {
            ops.push(AlignOp::Insert { b: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        a,
        b,
        ops,
        cost: Cost(dp[n * width + m]),
    }
}

/// Edits that turn the alignment's first sequence into its second, using
/// maximal-run merging.
pub fn extract_edits(alignment: &Alignment<'_>) -> Vec<Edit> {
    extract_edits_with(alignment, MergeStrategy::MaximalRun)
}

pub fn extract_edits_with(alignment: &Alignment<'_>, strategy: MergeStrategy) -> Vec<Edit> {
    let b = alignment.b;
    let mut edits = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    // (a_start, b_start) of the run being collected
    let mut run: Option<(usize, usize)> = None;

    let flush = |run: &mut Option<(usize, usize)>, i: usize, j: usize, edits: &mut Vec<Edit>| {
        if let Some((a0, b0)) = run.take() {
            edits.push(Edit {
                start: a0,
                end: i,
                replacement: b[b0..j].to_vec(),
            });
        }
    };

    for op in &alignment.ops {
        match *op {
            AlignOp::Match { .. } => {
                flush(&mut run, i, j, &mut edits);
                i += 1;
                j += 1;
            }
            AlignOp::Substitute { .. } | AlignOp::Delete { .. } => {
                if strategy == MergeStrategy::AllSplit {
                    flush(&mut run, i, j, &mut edits);
                }
                run.get_or_insert((i, j));
                i += 1;
                if matches!(op, AlignOp::Substitute { .. }) {
                    j += 1;
                }
                if strategy == MergeStrategy::AllSplit {
                    flush(&mut run, i, j, &mut edits);
                }
            }
            AlignOp::Insert { .. } => {
                run.get_or_insert((i, j));
                j += 1;
            }
        }
    }
    flush(&mut run, i, j, &mut edits);
    debug_assert!(edits.iter().all(|e| !e.is_noop_on(alignment.a)));
    edits
}

/// Applies sorted, non-overlapping edits to `src`.
pub fn apply_edits(src: &[String], edits: &[Edit]) -> Result<TokenSeq> {
    check_layout(edits, src.len(), "apply_edits")?;
    let mut out = src.to_vec();
    for e in edits.iter().rev() {
        out.splice(e.start..e.end, e.replacement.iter().cloned());
    }
    TokenSeq::new(out)
}

/// Partial map from positions of `b` to positions of `a`, defined on the
/// match operations of `align(a, b)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexMap {
    /// `(a, b)` pairs, strictly increasing in both coordinates.
    pairs: Vec<(usize, usize)>,
}

impl IndexMap {
    pub fn get(&self, b: usize) -> Option<usize> {
        self.pairs
            .binary_search_by_key(&b, |&(_, pb)| pb)
            .ok()
            .map(|k| self.pairs[k].0)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(a, b)` pairs in order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `(b, a)` entries in order of `b`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(a, b)| (b, a))
    }
}

pub fn index_map(a: &[String], b: &[String]) -> IndexMap {
    IndexMap {
        pairs: align(a, b).matches().collect(),
    }
}

/// Relates the coordinates of an original sentence and a perturbed copy of
/// it, given the perturbation edits in original coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationMap {
    /// `(original span, perturbed span)` for each perturbation edit.
    spans: Vec<((usize, usize), (usize, usize))>,
}

impl PerturbationMap {
    /// `perturbation` must be sorted and non-overlapping.
    pub fn new(perturbation: &[Edit]) -> Self {
        let mut shift = 0isize;
        let spans = perturbation
            .iter()
            .map(|p| {
                let start = (p.start as isize + shift) as usize;
                shift += p.length_delta();
                ((p.start, p.end), (start, start + p.replacement.len()))
            })
            .collect();
        PerturbationMap { spans }
    }

    pub fn original_spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spans.iter().map(|s| s.0)
    }

    pub fn perturbed_spans(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.spans.iter().map(|s| s.1)
    }

    /// Whether `e`, in original coordinates, touches a perturbed span.
    pub fn touches_original(&self, e: &Edit) -> bool {
        self.original_spans().any(|s| spans_overlap((e.start, e.end), s))
    }

    /// Whether `e`, in perturbed coordinates, touches a perturbed span.
    pub fn touches_perturbed(&self, e: &Edit) -> bool {
        self.perturbed_spans().any(|s| spans_overlap((e.start, e.end), s))
    }

    /// Maps an original-coordinate edit into perturbed coordinates; `None`
    /// when it overlaps a perturbation.
    pub fn to_perturbed(&self, e: &Edit) -> Option<Edit> {
        Self::shift(e, self.spans.iter().map(|&(o, p)| (o, p)))
    }

    /// Maps a perturbed-coordinate edit back into original coordinates;
    /// `None` when it overlaps a perturbation.
    pub fn to_original(&self, e: &Edit) -> Option<Edit> {
        Self::shift(e, self.spans.iter().map(|&(o, p)| (p, o)))
    }

    fn shift(
        e: &Edit,
        spans: impl Iterator<Item = ((usize, usize), (usize, usize))>,
    ) -> Option<Edit> {
        let mut delta = 0isize;
        for (from, to) in spans {
            if spans_overlap((e.start, e.end), from) {
                return None;
            }
            if from.1 <= e.start {
                delta += (to.1 - to.0) as isize - (from.1 - from.0) as isize;
            }
        }
        Some(Edit {
            start: (e.start as isize + delta) as usize,
            end: (e.end as isize + delta) as usize,
            replacement: e.replacement.clone(),
        })
    }
}

/// Maps a reference edit through perturbation edits.
pub fn map_edit(e: &Edit, perturbation: &[Edit]) -> Option<Edit> {
    PerturbationMap::new(perturbation).to_perturbed(e)
}

/// Convenience for aligning two sentences and extracting edits directly.
pub fn diff(a: &[String], b: &[String]) -> Vec<Edit> {
    align(a, b).edits()
}

/// Checks that `pairs` is strictly monotone and pairs equal tokens.
pub fn check_pairing(pairs: &[(usize, usize)], a: &[String], b: &[String], context: &str) -> Result<()> {
    for (k, &(i, j)) in pairs.iter().enumerate() {
        if i >= a.len() || j >= b.len() {
            return Err(Error::validation(context, format!("pair ({i},{j}) out of bounds")));
        }
        if a[i] != b[j] {
            return Err(Error::validation(
                context,
                format!("pair ({i},{j}) joins {:?} and {:?}", a[i], b[j]),
            ));
        }
        if k > 0 {
            let (pi, pj) = pairs[k - 1];
            if pi >= i || pj >= j {
                return Err(Error::validation(context, format!("pair ({i},{j}) is not monotone")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> TokenSeq {
        TokenSeq::split(s)
    }

    /// Minimum cost over every monotone alignment, by exhaustive recursion.
    fn brute_force_cost(a: &[String], b: &[String]) -> u32 {
        fn go(a: &[String], b: &[String]) -> u32 {
            match (a.split_first(), b.split_first()) {
                (None, None) => 0,
                (Some((_, ra)), None) => Cost::DELETE.0 + go(ra, b),
                (None, Some((_, rb))) => Cost::INSERT.0 + go(a, rb),
                (Some((x, ra)), Some((y, rb))) => {
                    let diag = substitution_cost(x, y).0 + go(ra, rb);
                    let del = Cost::DELETE.0 + go(ra, b);
                    let ins = Cost::INSERT.0 + go(a, rb);
                    diag.min(del).min(ins)
                }
            }
        }
        go(a, b)
    }

    #[test]
    fn figure_one_substitution() {
        let a = toks("I like play basketball");
        let b = toks("I like playing basketball");
        let al = align(&a, &b);
        assert_eq!(
            al.ops(),
            [
                AlignOp::Match { a: 0, b: 0 },
                AlignOp::Match { a: 1, b: 1 },
                AlignOp::Substitute { a: 2, b: 2 },
                AlignOp::Match { a: 3, b: 3 },
            ]
        );
        assert_eq!(al.total_cost(), 1.0);
        assert_eq!(al.edits(), vec![Edit::new(2, 3, ["playing"])]);
    }

    #[test]
    fn identity_alignment() {
        let a = toks("a b c d");
        let al = align(&a, &a);
        assert!(al.ops().iter().all(|op| op.is_match()));
        assert_eq!(al.cost(), Cost(0));
        assert!(al.edits().is_empty());
    }

    #[test]
    fn substitute_plus_insert_merges() {
        let a = toks("a b c");
        let b = toks("a x y c");
        let al = align(&a, &b);
        assert_eq!(al.cost(), Cost(20));
        assert_eq!(brute_force_cost(&a, &b), 20);
        let edits = al.edits();
        assert_eq!(edits, vec![Edit::new(1, 2, ["x", "y"])]);
        assert_eq!(apply_edits(&a, &edits).unwrap(), b);
    }

    #[test]
    fn all_split_strategy() {
        let a = toks("a b c");
        let b = toks("a x y c");
        let al = align(&a, &b);
        let split = extract_edits_with(&al, MergeStrategy::AllSplit);
        assert_eq!(split.len(), 2);
        assert_eq!(apply_edits(&a, &split).unwrap(), b);
    }

    #[test]
    fn case_only_substitution_is_cheap() {
        let a = toks("The cat");
        let b = toks("the cat");
        assert_eq!(align(&a, &b).cost(), Cost(1));
        assert_eq!(align(&a, &b).edits(), vec![Edit::new(0, 1, ["the"])]);
    }

    #[test]
    fn apply_examples() {
        let src = toks("I like play basketball");
        assert_eq!(
            apply_edits(&src, &[Edit::new(2, 3, ["playing"])]).unwrap(),
            toks("I like playing basketball")
        );
        assert_eq!(apply_edits(&src, &[]).unwrap(), src);
        let abc = toks("a b c");
        assert_eq!(
            apply_edits(&abc, &[Edit::new(0, 0, ["z"]), Edit::new(2, 3, Vec::<String>::new())]).unwrap(),
            toks("z a b")
        );
    }

    #[test]
    fn apply_rejects_bad_layout() {
        let abc = toks("a b c");
        assert!(apply_edits(&abc, &[Edit::new(2, 4, ["x"])]).is_err());
        assert!(apply_edits(&abc, &[Edit::new(1, 3, ["x"]), Edit::new(2, 3, ["y"])]).is_err());
        assert!(apply_edits(&abc, &[Edit::new(2, 3, ["x"]), Edit::new(0, 1, ["y"])]).is_err());
    }

    #[test]
    fn index_map_examples() {
        let a = toks("I like play basketball .");
        let b = toks("I really like play hockey .");
        let m = index_map(&a, &b);
        assert_eq!(m.entries().collect::<Vec<_>>(), vec![(0, 0), (2, 1), (3, 2), (5, 4)]);
        assert_eq!(m.get(2), Some(1));
        assert_eq!(m.get(1), None);
        let id = index_map(&a, &a);
        assert!(id.entries().all(|(x, y)| x == y));
        assert_eq!(id.len(), a.len());
        assert!(index_map(&toks("a b"), &toks("c d e")).is_empty());
    }

    #[test]
    fn perturbation_map_round_trip() {
        let pert = vec![Edit::new(1, 1, ["really"]), Edit::new(3, 4, ["hockey"])];
        let map = PerturbationMap::new(&pert);
        assert_eq!(map.perturbed_spans().collect::<Vec<_>>(), vec![(1, 2), (4, 5)]);
        let e = Edit::new(2, 3, ["playing"]);
        let fwd = map.to_perturbed(&e).unwrap();
        assert_eq!(fwd, Edit::new(3, 4, ["playing"]));
        assert_eq!(map.to_original(&fwd).unwrap(), e);
        assert!(map.to_perturbed(&Edit::new(3, 4, ["x"])).is_none());
        assert!(map.to_original(&Edit::new(4, 5, ["ice", "hockey"])).is_none());
    }

    fn token_vec() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "A", "b", "B", "c", "x", "the", "The"]),
            0..=8,
        )
        .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn dp_is_optimal(a in token_vec(), b in token_vec()) {
            let al = align(&a, &b);
            prop_assert_eq!(al.cost().0, brute_force_cost(&a, &b));
            prop_assert_eq!(al.recomputed_cost(), al.cost());
        }

        #[test]
        fn round_trip(a in token_vec(), b in token_vec()) {
            let al = align(&a, &b);
            let edits = al.edits();
            prop_assert_eq!(apply_edits(&a, &edits).unwrap().into_tokens(), b.clone());
            prop_assert!(check_edits_ok(&edits, &a));
            let split = extract_edits_with(&al, MergeStrategy::AllSplit);
            prop_assert_eq!(apply_edits(&a, &split).unwrap().into_tokens(), b.clone());
        }

        #[test]
        fn path_covers_both_sequences(a in token_vec(), b in token_vec()) {
            let al = align(&a, &b);
            let mut ai = Vec::new();
            let mut bj = Vec::new();
            for op in al.ops() {
                match *op {
                    AlignOp::Match { a: i, b: j } => {
                        prop_assert_eq!(&a[i], &b[j]);
                        ai.push(i);
                        bj.push(j);
                    }
                    AlignOp::Substitute { a: i, b: j } => {
                        prop_assert_ne!(&a[i], &b[j]);
                        ai.push(i);
                        bj.push(j);
                    }
                    AlignOp::Delete { a: i } => ai.push(i),
                    AlignOp::Insert { b: j } => bj.push(j),
                }
            }
            prop_assert_eq!(ai, (0..a.len()).collect::<Vec<_>>());
            prop_assert_eq!(bj, (0..b.len()).collect::<Vec<_>>());
            prop_assert_eq!(align(&a, &b), al);
        }

        #[test]
        fn perturbation_map_inverts(a in token_vec(), b in token_vec()) {
            let pert = align(&a, &b).edits();
            let map = PerturbationMap::new(&pert);
            for k in 0..=a.len() {
                let probe = Edit::new(k, k, ["probe"]);
                // an insertion point next to a deletion is ambiguous on the way back
                if let Some(back) = map.to_perturbed(&probe).and_then(|f| map.to_original(&f)) {
                    prop_assert_eq!(back, probe);
                }
            }
        }
    }

    fn check_edits_ok(edits: &[Edit], src: &[String]) -> bool {
        crate::types::check_edits(edits, src, "prop").is_ok()
    }
}
