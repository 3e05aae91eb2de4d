//! Pseudo-gloss generation: prompt construction in the two supported
//! glossing conventions, an LLM transport with an offline file-backed mock,
//! response parsing, token normalization, length capping for CTC
//! feasibility, and a stop-word baseline.

mod client;
mod prompt;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use client::{
    generate, GenerateReport, HttpTransport, LlmClient, LlmClientConfig, MockTransport, Transport,
};
pub use prompt::{build_prompt, parse_response, ExamplePair, PromptSpec};

use crate::error::{Error, Result};

/// Redundant-word list used for gloss length capping and the stop-word
/// baseline, embedded verbatim as data.
const REMOVE_WORDS_DATA: &str = include_str!("llm/remove_words.txt");

/// The bundled redundant-word list, in file order.
pub fn remove_words() -> impl Iterator<Item = &'static str> {
    REMOVE_WORDS_DATA
        .lines()
        .map(str::trim)
        .filter(|w| !w.is_empty())
}

/// The redundant-word list as a lookup set (lower-case).
pub fn stop_set() -> HashSet<String> {
    remove_words().map(str::to_string).collect()
}

/// Glossing convention in use; determines case folding and the prompt
/// template family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// German Sign Language weather-forecast style: upper-case glosses,
    /// one query per prompt.
    Dgs,
    /// American Sign Language style: lower-case glosses, batched queries.
    Asl,
}

impl Convention {
    pub fn fold(&self, token: &str) -> String {
        match self {
            Convention::Dgs => token.to_uppercase(),
            Convention::Asl => token.to_lowercase(),
        }
    }

    /// Resolve a free-form language tag like `DGS-weather` or `ASL`.
    pub fn from_tag(tag: &str) -> Result<Convention> {
        let lower = tag.to_lowercase();
        if lower.starts_with("dgs") {
            Ok(Convention::Dgs)
        } else if lower.starts_with("asl") || lower.starts_with("how2sign") {
            Ok(Convention::Asl)
        } else {
            Err(Error::Config(format!(
                "language tag {tag:?} names no known convention (dgs* or asl*)"
            )))
        }
    }
}

const TERMINAL_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':'];

fn normalize_token(token: &str, convention: Convention) -> Option<String> {
    let trimmed = token.trim().trim_end_matches(TERMINAL_PUNCTUATION);
    if trimmed.is_empty() {
        return None;
    }
    Some(convention.fold(trimmed))
}

/// Canonicalize parsed gloss tokens: trim whitespace, strip terminal
/// punctuation, apply the convention's case folding, drop empty tokens.
/// An entirely empty result is an error.
pub fn normalize_gloss(tokens: &[String], convention: Convention) -> Result<Vec<String>> {
    let out: Vec<String> = tokens
        .iter()
        .filter_map(|t| normalize_token(t, convention))
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyGloss);
    }
    Ok(out)
}

/// Cap a gloss to `max_len` tokens: first remove, left to right, tokens
/// whose lower-cased form is in `stop_list`; if still too long, truncate
/// from the tail.
pub fn cap_length(
    mut gloss: Vec<String>,
    max_len: usize,
    stop_list: &HashSet<String>,
) -> Vec<String> {
    let mut i = 0;
    while gloss.len() > max_len && i < gloss.len() {
        if stop_list.contains(&gloss[i].to_lowercase()) {
            gloss.remove(i);
        } else {
            i += 1;
        }
    }
    gloss.truncate(max_len);
    gloss
}

/// Content-word baseline: keep text tokens that survive normalization and
/// are not in the stop list, in their original order. Contraction suffixes
/// (`'s`) are stripped. May return an empty gloss.
pub fn stopword_baseline(
    text: &[String],
    stop_list: &HashSet<String>,
    convention: Convention,
) -> Vec<String> {
    text.iter()
        .filter_map(|word| {
            let normalized = normalize_token(word, convention)?;
            let stripped = normalized
                .strip_suffix("'s")
                .or_else(|| normalized.strip_suffix("'S"))
                .unwrap_or(&normalized);
            if stripped.is_empty() || stop_list.contains(&stripped.to_lowercase()) {
                None
            } else {
                Some(stripped.to_string())
            }
        })
        .collect()
}
