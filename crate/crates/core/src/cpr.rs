//! Consistency-regularized training math: position pairing between an
//! original and a perturbed sentence, the bidirectional KL penalty at paired
//! positions, NLL, their combination and its analytic gradient, the KEEP
//! bias used at inference time, and export of aligned training pairs.
//!
//! Everything numeric is generic over [`Scalar`] so trainers can work in
//! `f32` or `f64`.

use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{check_pairing, index_map};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::GecCase;

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// A probability vector over a label or vocabulary space.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> TokenDistribution<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::validation("distribution", format!("needs at least 2 entries, got {}", probs.len())));
        }
        if let Some(x) = probs.iter().find(|x| !x.is_finite() || **x < T::zero()) {
            return Err(Error::validation("distribution", format!("entry {x} is not a probability")));
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > T::normalization_tolerance() {
            return Err(Error::validation("distribution", format!("entries sum to {sum}")));
        }
        Ok(TokenDistribution { probs })
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[T]) -> Result<Self> {
        Self::new(softmax(logits))
    }

    pub fn uniform(v: usize) -> Result<Self> {
        Self::new(vec![T::one() / T::from_count(v.max(1)); v])
    }

    pub fn one_hot(v: usize, k: usize) -> Result<Self> {
        if k >= v {
            return Err(Error::IndexOutOfRange { index: k, size: v });
        }
        let mut probs = vec![T::zero(); v];
        probs[k] = T::one();
        Self::new(probs)
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&u| (u - m).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn clamped_ln<T: Scalar>(p: T) -> T {
    p.max(T::lit(PROB_FLOOR)).ln()
}

/// Ordered `(i, j)` pairs: position `i` of the original aligned to position
/// `j` of the perturbed sequence, at positions the perturbation left alone.
pub type PositionPairing = Vec<(usize, usize)>;

/// Positions where `a` and `b` hold the same token under their alignment.
pub fn nonperturb_pairs(a: &[String], b: &[String]) -> PositionPairing {
    index_map(a, b).pairs().to_vec()
}

/// ½·(KL(p‖q) + KL(q‖p)) in nats.
pub fn kl_bidirectional<T: Scalar>(p: &TokenDistribution<T>, q: &TokenDistribution<T>) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    let half = T::lit(0.5);
    Ok(half
        * p.probs
            .iter()
            .zip(&q.probs)
            .map(|(&pk, &qk)| (pk - qk) * (clamped_ln(pk) - clamped_ln(qk)))
            .sum::<T>())
}

/// −Σ ln p(gold) over one sequence.
pub fn nll<T: Scalar>(dists: &[TokenDistribution<T>], gold: &[usize]) -> Result<T> {
    if dists.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            left: dists.len(),
            right: gold.len(),
        });
    }
    let mut total = T::zero();
    for (d, &g) in dists.iter().zip(gold) {
        let p = *d.probs.get(g).ok_or(Error::IndexOutOfRange { index: g, size: d.len() })?;
        total -= clamped_ln(p);
    }
    Ok(total)
}

/// How per-pair KL values combine into the KL term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum KlReduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CprConfig<T> {
    pub alpha: T,
    pub reduction: KlReduction,
}

impl<T: Scalar> Default for CprConfig<T> {
    fn default() -> Self {
        CprConfig {
            alpha: T::one(),
            reduction: KlReduction::Sum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CprLoss<T> {
    pub total: T,
    pub nll_term: T,
    pub kl_term: T,
}

fn check_positions(pairing: &[(usize, usize)], len_p: usize, len_q: usize) -> Result<()> {
    for (k, &(i, j)) in pairing.iter().enumerate() {
        if i >= len_p {
            return Err(Error::IndexOutOfRange { index: i, size: len_p });
        }
        if j >= len_q {
            return Err(Error::IndexOutOfRange { index: j, size: len_q });
        }
        if k > 0 && (pairing[k - 1].0 >= i || pairing[k - 1].1 >= j) {
            return Err(Error::validation("pairing", format!("pair ({i},{j}) is not strictly monotone")));
        }
    }
    Ok(())
}

fn kl_scale<T: Scalar>(reduction: KlReduction, pairs: usize) -> T {
    match reduction {
        KlReduction::Mean if pairs > 0 => T::one() / T::from_count(pairs),
        _ => T::one(),
    }
}

/// NLL of both sequences plus α times the KL penalty at paired positions.
pub fn cpr_loss<T: Scalar>(
    p: &[TokenDistribution<T>],
    q: &[TokenDistribution<T>],
    pairing: &[(usize, usize)],
    gold_p: &[usize],
    gold_q: &[usize],
    config: CprConfig<T>,
) -> Result<CprLoss<T>> {
    check_positions(pairing, p.len(), q.len())?;
    let nll_term = nll(p, gold_p)? + nll(q, gold_q)?;
    let mut kl = T::zero();
    for &(i, j) in pairing {
        kl += kl_bidirectional(&p[i], &q[j])?;
    }
    let kl_term = kl * kl_scale(config.reduction, pairing.len());
    Ok(CprLoss {
        total: nll_term + config.alpha * kl_term,
        nll_term,
        kl_term,
    })
}

/// Loss value with gradients with respect to both logit sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct CprGrad<T> {
    pub loss: CprLoss<T>,
    pub d_p: Vec<Vec<T>>,
    pub d_q: Vec<Vec<T>>,
}

/// Back-propagates a gradient with respect to probabilities through softmax.
fn through_softmax<T: Scalar>(probs: &[T], g: &[T]) -> Vec<T> {
    let dot: T = probs.iter().zip(g).map(|(&p, &gk)| p * gk).sum();
    probs.iter().zip(g).map(|(&p, &gk)| p * (gk - dot)).collect()
}

/// Partial derivatives of the bidirectional KL with respect to `p` and `q`.
/// Clamped entries contribute no slope through the log.
fn kl_prob_grads<T: Scalar>(p: &[T], q: &[T]) -> (Vec<T>, Vec<T>) {
    let floor = T::lit(PROB_FLOOR);
    let half = T::lit(0.5);
    let inv = |x: T| if x > floor { T::one() / x } else { T::zero() };
    p.iter()
        .zip(q)
        .map(|(&pk, &qk)| {
            let dl = clamped_ln(pk) - clamped_ln(qk);
            (half * (dl + (pk - qk) * inv(pk)), half * (-dl + (qk - pk) * inv(qk)))
        })
        .unzip()
}

fn dists_from_logits<T: Scalar>(logits: &[Vec<T>]) -> Result<Vec<TokenDistribution<T>>> {
    logits.iter().map(|u| TokenDistribution::from_logits(u)).collect()
}

/// Analytic gradient of [`cpr_loss`] composed with a per-position softmax.
pub fn cpr_loss_grad<T: Scalar>(
    p_logits: &[Vec<T>],
    q_logits: &[Vec<T>],
    pairing: &[(usize, usize)],
    gold_p: &[usize],
    gold_q: &[usize],
    config: CprConfig<T>,
) -> Result<CprGrad<T>> {
    let p = dists_from_logits(p_logits)?;
    let q = dists_from_logits(q_logits)?;
    let loss = cpr_loss(&p, &q, pairing, gold_p, gold_q, config)?;

    let floor = T::lit(PROB_FLOOR);
    // NLL through softmax is p - onehot(gold), unless the gold entry is clamped.
    let nll_grad = |d: &TokenDistribution<T>, g: usize| -> Vec<T> {
        let mut out = d.probs.clone();
        if d.probs[g] > floor {
            out[g] -= T::one();
            out
        } else {
            // −ln(floor) is constant here
            vec![T::zero(); out.len()]
        }
    };
    let mut d_p: Vec<Vec<T>> = p.iter().zip(gold_p).map(|(d, &g)| nll_grad(d, g)).collect();
    let mut d_q: Vec<Vec<T>> = q.iter().zip(gold_q).map(|(d, &g)| nll_grad(d, g)).collect();

    let w = config.alpha * kl_scale::<T>(config.reduction, pairing.len());
    for &(i, j) in pairing {
        let (gp, gq) = kl_prob_grads(&p[i].probs, &q[j].probs);
        for (acc, x) in d_p[i].iter_mut().zip(through_softmax(&p[i].probs, &gp)) {
            *acc += w * x;
        }
        for (acc, x) in d_q[j].iter_mut().zip(through_softmax(&q[j].probs, &gq)) {
            *acc += w * x;
        }
    }
    Ok(CprGrad { loss, d_p, d_q })
}

/// Adds `bias` to the log-probability of the KEEP label and renormalizes.
pub fn keep_bias<T: Scalar>(dist: &TokenDistribution<T>, keep_index: usize, bias: T) -> Result<TokenDistribution<T>> {
    if keep_index >= dist.len() {
        return Err(Error::IndexOutOfRange {
            index: keep_index,
            size: dist.len(),
        });
    }
    if bias == T::zero() {
        return Ok(dist.clone());
    }
    let keep_mass = dist.probs[keep_index];
    if bias.is_infinite() && keep_mass > T::zero() {
        if bias > T::zero() {
            return TokenDistribution::one_hot(dist.len(), keep_index);
        }
        let rest = T::one() - keep_mass;
        if rest > T::zero() {
            let probs = dist
                .probs
                .iter()
                .enumerate()
                .map(|(k, &p)| if k == keep_index { T::zero() } else { p / rest })
                .collect();
            return TokenDistribution::new(probs);
        }
    }
    let logs: Vec<T> = dist
        .probs
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == keep_index { p.ln() + bias } else { p.ln() })
        .collect();
    TokenDistribution::new(softmax(&logs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}; expected train, dev or test"))),
        }
    }
}

/// Case counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

impl FromStr for SplitSizes {
    type Err = Error;

    /// `train/dev/test`, e.g. `3000/500/2500`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(['/', ','])
            .map(|p| p.trim().parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("split sizes {s:?} are not counts")))?;
        match parts[..] {
            [train, dev, test] => Ok(SplitSizes { train, dev, test }),
            _ => Err(Error::Config(format!("expected train/dev/test counts, got {s:?}"))),
        }
    }
}

/// Seeded assignment of each case index to a split.
pub fn assign_splits(num_cases: usize, sizes: SplitSizes, seed: u64) -> Result<Vec<Split>> {
    if sizes.total() != num_cases {
        return Err(Error::Config(format!(
            "split sizes add up to {} but the corpus has {num_cases} cases",
            sizes.total()
        )));
    }
    let mut order: Vec<usize> = (0..num_cases).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Test; num_cases];
    for (rank, idx) in order.into_iter().enumerate() {
        out[idx] = if rank < sizes.train {
            Split::Train
        } else if rank < sizes.train + sizes.dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    Ok(out)
}

/// An original sample and one perturbed variant, with target sequences
/// derived from the first reference annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub case_id: String,
    pub variant_index: usize,
    pub orig_src: Vec<String>,
    pub orig_tgt: Vec<String>,
    pub pert_src: Vec<String>,
    pub pert_tgt: Vec<String>,
    pub src_pairs: PositionPairing,
    pub tgt_pairs: PositionPairing,
}

impl TrainingPair {
    /// Checks both pairings against their token sequences.
    pub fn validate(&self) -> Result<()> {
        let ctx = format!("pair {}/{}", self.case_id, self.variant_index);
        check_pairing(&self.src_pairs, &self.orig_src, &self.pert_src, &ctx)?;
        check_pairing(&self.tgt_pairs, &self.orig_tgt, &self.pert_tgt, &ctx)
    }
}

/// The pair for variant `variant_index` (1-based) of `case`.
pub fn training_pair(case: &GecCase, variant_index: usize) -> Result<TrainingPair> {
    let variant = case
        .sentence(variant_index)
        .filter(|_| variant_index > 0)
        .ok_or(Error::IndexOutOfRange {
            index: variant_index,
            size: case.num_sentences(),
        })?;
    let missing = || Error::validation(format!("case {}", case.case_id), "no reference annotation to derive targets");
    if case.original.references.is_empty() || variant.references.is_empty() {
        return Err(missing());
    }
    let orig_tgt = case.original.target(0)?;
    let pert_tgt = variant.target(0)?;
    Ok(TrainingPair {
        case_id: case.case_id.clone(),
        variant_index,
        src_pairs: nonperturb_pairs(&case.original.source, &variant.source),
        tgt_pairs: nonperturb_pairs(&orig_tgt, &pert_tgt),
        orig_src: case.original.source.tokens().to_vec(),
        orig_tgt: orig_tgt.into_tokens(),
        pert_src: variant.source.tokens().to_vec(),
        pert_tgt: pert_tgt.into_tokens(),
    })
}

/// Pairs for every variant of the cases assigned to `split`, or of all cases
/// when `split` is `None`. `assignment` is parallel to `cases`.
pub fn export_training_pairs<'a>(
    cases: &'a [GecCase],
    assignment: &'a [Split],
    split: Option<Split>,
) -> impl Iterator<Item = Result<TrainingPair>> + 'a {
    cases
        .iter()
        .enumerate()
        .filter(move |&(k, _)| split.is_none_or(|s| assignment.get(k) == Some(&s)))
        .flat_map(|(_, case)| (1..=case.variants.len()).map(move |v| training_pair(case, v)))
}

/// Writes pairs as JSON Lines and returns how many were written.
pub fn write_training_pairs<W: Write>(
    pairs: impl IntoIterator<Item = Result<TrainingPair>>,
    mut out: W,
) -> Result<usize> {
    let mut n = 0;
    for pair in pairs {
        let line = serde_json::to_string(&pair?).expect("training pairs serialize");
        writeln!(out, "{line}").map_err(|e| Error::io("<output>", e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(n)
}
