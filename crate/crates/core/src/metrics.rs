//! Sequence evaluation metrics: word error rate, corpus BLEU, ROUGE-L,
//! micro-averaged set precision/recall, and a Kendall-tau order distance for
//! alignment audits.
//!
//! All functions operate on already-tokenized sequences and never
//! re-tokenize; callers own normalization.

use std::collections::{BTreeSet, HashMap};
use std::hash::Hash;

use crate::error::{Error, Result};

/// Word error rate: word-level Levenshtein distance with unit costs divided
/// by the reference length. Can exceed 1 for long hypotheses.
pub fn wer<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    Ok(edit_distance(hypothesis, reference) as f64 / reference.len() as f64)
}

/// Corpus-level WER: total edit distance over total reference length.
pub fn corpus_wer<T: PartialEq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    let mut edits = 0usize;
    let mut ref_len = 0usize;
    for (hyp, reference) in pairs {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        edits += edit_distance(hyp, reference);
        ref_len += reference.len();
    }
    if ref_len == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(edits as f64 / ref_len as f64)
}

fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Corpus BLEU with uniform weights over n-gram orders `1..=max_n`, a single
/// reference per hypothesis, brevity penalty
/// `exp(min(0, 1 - ref_len / hyp_len))`, and no smoothing: zero matches at
/// any order give a score of 0.
pub fn bleu<T: Hash + Eq>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
) -> Result<f64> {
    if hypotheses.is_empty() || hypotheses.len() != references.len() {
        return Err(Error::Config(format!(
            "bleu needs equally many hypotheses and references, got {} and {}",
            hypotheses.len(),
            references.len()
        )));
    }
    if !(1..=4).contains(&max_n) {
        return Err(Error::Config(format!(
            "bleu max_n must be in 1..=4, got {max_n}"
        )));
    }
    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(reference, n);
            let hyp_counts = ngram_counts(hyp, n);
            for (gram, count) in &hyp_counts {
                let clipped = (*count).min(ref_counts.get(gram).copied().unwrap_or(0));
                matches[n - 1] += clipped;
            }
            totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_precision_sum = 0.0;
    for n in 0..max_n {
        if matches[n] == 0 || totals[n] == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    let brevity = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp();
    Ok(brevity * (log_precision_sum / max_n as f64).exp())
}

fn ngram_counts<T: Hash + Eq>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// ROUGE-L F-measure from the longest common subsequence:
/// `R = LCS/|ref|`, `P = LCS/|hyp|`, `F = 2PR/(P+R)`, 0 when the LCS is empty.
pub fn rouge_l<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let lcs = lcs_length(hypothesis, reference);
    if lcs == 0 {
        return Ok(0.0);
    }
    let recall = lcs as f64 / reference.len() as f64;
    let precision = lcs as f64 / hypothesis.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Micro-averaged set precision/recall over a corpus of label-id sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// False when the predicted sets were all empty (precision reported as 0).
    pub precision_defined: bool,
    /// False when the true sets were all empty (recall reported as 0).
    pub recall_defined: bool,
}

pub fn set_precision_recall(
    predicted: &[BTreeSet<usize>],
    truth: &[BTreeSet<usize>],
) -> Result<PrecisionRecall> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predicted sets vs {} true sets",
            predicted.len(),
            truth.len()
        )));
    }
    let mut hits = 0usize;
    let mut pred_total = 0usize;
    let mut true_total = 0usize;
    for (pred, t) in predicted.iter().zip(truth) {
        hits += pred.intersection(t).count();
        pred_total += pred.len();
        true_total += t.len();
    }
    Ok(PrecisionRecall {
        precision: if pred_total > 0 {
            hits as f64 / pred_total as f64
        } else {
            0.0
        },
        recall: if true_total > 0 {
            hits as f64 / true_total as f64
        } else {
            0.0
        },
        precision_defined: pred_total > 0,
        recall_defined: true_total > 0,
    })
}

/// Normalized Kendall-tau distance restricted to shared tokens: the fraction
/// of shared-token pairs whose relative order differs between the two
/// sequences.
///
/// Tokens occurring more than once in either sequence are excluded; fewer
/// than two shared tokens give distance 0.
pub fn kendall_distance<T: Hash + Eq>(seq_a: &[T], seq_b: &[T]) -> f64 {
    let pos_a = unique_positions(seq_a);
    let pos_b = unique_positions(seq_b);
    let shared: Vec<(usize, usize)> = pos_a
        .iter()
        .filter_map(|(tok, &pa)| pos_b.get(tok).map(|&pb| (pa, pb)))
        .collect();
    if shared.len() < 2 {
        return 0.0;
    }
    let mut discordant = 0usize;
    let mut total = 0usize;
    for i in 0..shared.len() {
        for j in (i + 1)..shared.len() {
            total += 1;
            let (a1, b1) = shared[i];
            let (a2, b2) = shared[j];
            if (a1 < a2) != (b1 < b2) {
                discordant += 1;
            }
        }
    }
    discordant as f64 / total as f64
}

fn unique_positions<T: Hash + Eq>(seq: &[T]) -> HashMap<&T, usize> {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for token in seq {
        *counts.entry(token).or_insert(0) += 1;
    }
    seq.iter()
        .enumerate()
        .filter(|(_, token)| counts[token] == 1)
        .map(|(i, token)| (token, i))
        .collect()
}
