//! Reordering of draft glosses against video temporal structure: frame-wise
//! argmax labels, filter/merge into a reference gloss, and a two-pointer
//! greedy pass that permutes the draft to follow the reference order.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::corpus::{Corpus, GlossVocabulary, ProbMatrix};
use crate::error::Result;
use crate::mlc::LinearClassifier;

/// Per-record alignment outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Argmax gloss id per frame.
    pub frame_labels: Vec<usize>,
    /// Frame labels filtered to the draft's token set, adjacent duplicates
    /// merged.
    pub ref_gloss: Vec<String>,
    /// The draft permuted to follow `ref_gloss` order.
    pub reordered: Vec<String>,
}

/// Argmax gloss id per frame; exact ties resolve to the lowest id so outputs
/// are identical across implementations.
pub fn framewise_gloss(probs: &ProbMatrix) -> Vec<usize> {
    (0..probs.frames())
        .map(|t| {
            let row = probs.row(t);
            let mut best = 0usize;
            for (k, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Drop frames whose token is absent from the draft, then collapse runs of
/// equal adjacent tokens. May return an empty sequence.
pub fn filter_and_merge(
    frame_labels: &[usize],
    vocab: &GlossVocabulary,
    llm_gloss: &[String],
) -> Vec<String> {
    let draft_set: HashSet<&str> = llm_gloss.iter().map(String::as_str).collect();
    let mut out: Vec<String> = Vec::new();
    for &label in frame_labels {
        let token = vocab.symbol(label);
        if !draft_set.contains(token) {
            continue;
        }
        if out.last().map(String::as_str) != Some(token) {
            out.push(token.to_string());
        }
    }
    out
}

/// Greedy reordering of the draft `llm_gloss` against the temporal
/// `ref_gloss`.
///
/// Two pointers walk the draft and the reference. A draft token matching the
/// current reference token is consumed from both; a draft token absent from
/// the reference is kept in place; otherwise the current reference token is
/// pulled forward from the first unconsumed later draft position, if one
/// exists, and skipped if not. Once the reference is exhausted the remaining
/// draft is appended in order. The output is always a multiset permutation
/// of the draft.
pub fn greedy_reorder<T: Clone + PartialEq>(llm_gloss: &[T], ref_gloss: &[T]) -> Vec<T> {
    let mut draft: Vec<T> = llm_gloss.to_vec();
    let mut target: Vec<T> = Vec::with_capacity(draft.len());
    let mut i = 0usize;
    let mut j = 0usize;
    while i < draft.len() {
        if j < ref_gloss.len() && draft[i] == ref_gloss[j] {
            target.push(draft[i].clone());
            i += 1;
            j += 1;
        } else if !ref_gloss.contains(&draft[i]) {
            target.push(draft[i].clone());
            i += 1;
        } else if j >= ref_gloss.len() {
            // reference exhausted: keep the rest of the draft in order
            target.extend(draft[i..].iter().cloned());
            break;
        } else if let Some(later) = (i + 1..draft.len()).find(|&p| draft[p] == ref_gloss[j]) {
            target.push(ref_gloss[j].clone());
            draft.remove(later);
            j += 1;
        } else {
            // the current reference token has no unconsumed draft occurrence
            j += 1;
        }
    }
    target
}

/// Run the alignment pipeline for one record's features and draft.
pub fn align_record(
    classifier: &LinearClassifier,
    features: &crate::corpus::FeatureMatrix,
    llm_gloss: &[String],
    vocab: &GlossVocabulary,
) -> Result<AlignmentResult> {
    let probs = classifier.forward(features)?;
    let frame_labels = framewise_gloss(&probs);
    let ref_gloss = filter_and_merge(&frame_labels, vocab, llm_gloss);
    let reordered = greedy_reorder(llm_gloss, &ref_gloss);
    Ok(AlignmentResult {
        frame_labels,
        ref_gloss,
        reordered,
    })
}

/// Fill `reordered_gloss` on every record of the corpus and return the
/// per-record alignment details. Records with an empty draft pass through
/// with a warning and an empty reordered gloss.
pub fn align_corpus(
    corpus: &mut Corpus,
    classifier: &LinearClassifier,
    vocab: &GlossVocabulary,
) -> Result<Vec<AlignmentResult>> {
    let mut results = Vec::with_capacity(corpus.records.len());
    for idx in 0..corpus.records.len() {
        let record = &corpus.records[idx];
        if record.llm_gloss.is_empty() {
            log::warn!("record {}: empty llm_gloss, nothing to reorder", record.id);
            let probs = classifier.forward(&corpus.features[idx]).map_err(|e| {
                crate::error::Error::Record {
                    id: record.id.clone(),
                    reason: e.to_string(),
                }
            })?;
            let frame_labels = framewise_gloss(&probs);
            corpus.records[idx].reordered_gloss = Some(Vec::new());
            results.push(AlignmentResult {
                frame_labels,
                ref_gloss: Vec::new(),
                reordered: Vec::new(),
            });
            continue;
        }
        let result = align_record(classifier, &corpus.features[idx], &record.llm_gloss, vocab)
            .map_err(|e| crate::error::Error::Record {
                id: record.id.clone(),
                reason: e.to_string(),
            })?;
        corpus.records[idx].reordered_gloss = Some(result.reordered.clone());
        results.push(result);
    }
    Ok(results)
}

#[derive(Serialize)]
struct AuditLine<'a> {
    id: &'a str,
    frame_labels: Vec<&'a str>,
    ref_gloss: &'a [String],
    llm_gloss: &'a [String],
    reordered_gloss: &'a [String],
}

/// Write the alignment audit file: one JSON line per record with the same
/// columns as a reorder inspection table.
pub fn write_audit(
    path: &Path,
    corpus: &Corpus,
    results: &[AlignmentResult],
    vocab: &GlossVocabulary,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for (record, result) in corpus.records.iter().zip(results) {
        let line = AuditLine {
            id: &record.id,
            frame_labels: result
                .frame_labels
                .iter()
                .map(|&l| vocab.symbol(l))
                .collect(),
            ref_gloss: &result.ref_gloss,
            llm_gloss: &record.llm_gloss,
            reordered_gloss: &result.reordered,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
