//! ROUGE-N precision and recall with clipped n-gram counts.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::perturb::tokens::words;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge {
    /// Overlap over candidate n-grams.
    pub precision: f64,
    /// Overlap over original n-grams.
    pub recall: f64,
}

/// A pre-tagged sentence; syntactic ROUGE compares the tag sequences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedText {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
    }
    counts
}

pub fn rouge_n_tokens<S: AsRef<str>>(original: &[S], candidate: &[S], n: usize) -> Result<Rouge, MetricsError> {
    if !(1..=3).contains(&n) {
        return Err(MetricsError::BadN(n));
    }
    for t in [original, candidate] {
        if t.len() < n {
            return Err(MetricsError::TooShort { n, found: t.len() });
        }
    }
    let a = ngrams(original, n);
    let b = ngrams(candidate, n);
    let overlap: usize = b
        .iter()
        .map(|(g, &c)| c.min(a.get(g).copied().unwrap_or(0)))
        .sum();
    Ok(Rouge {
        precision: overlap as f64 / (candidate.len() - n + 1) as f64,
        recall: overlap as f64 / (original.len() - n + 1) as f64,
    })
}

/// Word-level ROUGE-N on lowercased word tokens, punctuation dropped.
pub fn rouge_n(original: &str, candidate: &str, n: usize) -> Result<Rouge, MetricsError> {
    rouge_n_tokens(&words(original), &words(candidate), n)
}

/// ROUGE-N over the tag sequences of two tagged sentences.
pub fn rouge_n_tagged(original: &TaggedText, candidate: &TaggedText, n: usize) -> Result<Rouge, MetricsError> {
    for t in [original, candidate] {
        if t.tokens.len() != t.tags.len() {
            return Err(MetricsError::TagMismatch {
                tokens: t.tokens.len(),
                tags: t.tags.len(),
            });
        }
    }
    rouge_n_tokens(&original.tags, &candidate.tags, n)
}
