//! Evaluation metrics over verification results, subspaces and texts.

mod report;
mod rouge;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;
use crate::geometry::{log_volume, AxisRect, GeometryError, Subspace};
use crate::scalar::Scalar;
use crate::verify::Outcome;

pub use report::{format_percent, format_sci, render_csv, render_markdown, MetricsReport, VolumeSummary};
pub use rouge::{rouge_n, rouge_n_tagged, rouge_n_tokens, Rouge, TaggedText};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{0} predictions for {1} labels")]
    LengthMismatch(usize, usize),
    #[error("n must be 1, 2 or 3, got {0}")]
    BadN(usize),
    #[error("text has {found} tokens, fewer than n = {n}")]
    TooShort { n: usize, found: usize },
    #[error("tagged text has {tokens} tokens but {tags} tags")]
    TagMismatch { tokens: usize, tags: usize },
    #[error("reference rect is degenerate")]
    DegenerateGlobal,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn percent(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verifiability {
    pub percent: f64,
    pub verified: usize,
    pub falsified: usize,
    pub unknown: usize,
    pub total: usize,
}

/// Share of results that are Verified; Falsified and Unknown both count
/// as unverified and are tallied separately.
pub fn verifiability(results: &[Outcome]) -> Result<Verifiability, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty("result list"));
    }
    let count = |o| results.iter().filter(|&&r| r == o).count();
    let verified = count(Outcome::Verified);
    Ok(Verifiability {
        percent: percent(verified, results.len()),
        verified,
        falsified: count(Outcome::Falsified),
        unknown: count(Outcome::Unknown),
        total: results.len(),
    })
}

/// A count out of a total, with its percentage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub percent: f64,
    pub hits: usize,
    pub total: usize,
}

fn in_union<T: Scalar>(v: &[T], subs: &[Subspace<T>]) -> Result<bool, MetricsError> {
    for s in subs {
        if s.contains(v)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn union_share<T: Scalar>(vectors: &[Vec<T>], subs: &[Subspace<T>], what: &'static str) -> Result<Share, MetricsError> {
    if vectors.is_empty() {
        return Err(MetricsError::Empty(what));
    }
    let flags: Vec<bool> = vectors
        .par_iter()
        .map(|v| in_union(v, subs))
        .collect::<Result<_, _>>()?;
    let hits = flags.iter().filter(|&&f| f).count();
    Ok(Share {
        percent: percent(hits, vectors.len()),
        hits,
        total: vectors.len(),
    })
}

/// Share of held-out vectors lying in at least one subspace.
pub fn generalisability<T: Scalar>(vectors: &[Vec<T>], subs: &[Subspace<T>]) -> Result<Share, MetricsError> {
    union_share(vectors, subs, "vector set")
}

/// Share of wrong-class vectors lying in at least one subspace.
pub fn false_positive_rate<T: Scalar>(other: &[Vec<T>], subs: &[Subspace<T>]) -> Result<Share, MetricsError> {
    union_share(other, subs, "wrong-class vector set")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingErrorStat {
    pub percent: f64,
    /// Per subspace: contains at least one wrong-class vector.
    pub flags: Vec<bool>,
    pub hits: usize,
    pub total: usize,
}

/// Share of subspaces containing at least one wrong-class vector.
pub fn embedding_error<T: Scalar>(other: &[Vec<T>], subs: &[Subspace<T>]) -> Result<EmbeddingErrorStat, MetricsError> {
    if subs.is_empty() {
        return Err(MetricsError::Empty("subspace list"));
    }
    let flags: Vec<bool> = subs
        .par_iter()
        .map(|s| -> Result<bool, MetricsError> {
            for v in other {
                if s.contains(v)? {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect::<Result<_, _>>()?;
    let hits = flags.iter().filter(|&&f| f).count();
    Ok(EmbeddingErrorStat {
        percent: percent(hits, subs.len()),
        flags,
        hits,
        total: subs.len(),
    })
}

/// Binary classification scores with `pos` as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when no positive predictions exist (precision reported as 0).
    pub precision_undefined: bool,
    /// Set when no positive labels exist (recall reported as 0).
    pub recall_undefined: bool,
}

pub fn precision_recall_f1(predictions: &[Label], labels: &[Label]) -> Result<Classification, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), labels.len()));
    }
    if labels.is_empty() {
        return Err(MetricsError::Empty("label list"));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        correct += usize::from(p == l);
        match (p, l) {
            (Label::Pos, Label::Pos) => tp += 1,
            (Label::Pos, Label::Neg) => fp += 1,
            (Label::Neg, Label::Pos) => fn_ += 1,
            (Label::Neg, Label::Neg) => {}
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(Classification {
        accuracy: ratio(correct, labels.len()),
        precision,
        recall,
        f1,
        precision_undefined: tp + fp == 0,
        recall_undefined: tp + fn_ == 0,
    })
}

/// Fraction of a reference rect covered by a set of subspaces, with
/// volumes summed (overlaps are not deduplicated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// `log10 Σ vol(sub)`; `−∞` when empty or all degenerate.
    pub log10_total: f64,
    pub log10_fraction: f64,
}

impl Coverage {
    pub fn fraction(&self) -> f64 {
        10f64.powf(self.log10_fraction)
    }
}

/// `log10 Σ 10^v` without leaving log space.
pub fn log10_sum(log_volumes: &[f64]) -> f64 {
    let max = log_volumes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + log_volumes.iter().map(|&v| 10f64.powf(v - max)).sum::<f64>().log10()
}

pub fn coverage_from_log_volumes(log_volumes: &[f64], global_log10: f64) -> Result<Coverage, MetricsError> {
    if !global_log10.is_finite() {
        return Err(MetricsError::DegenerateGlobal);
    }
    let log10_total = log10_sum(log_volumes);
    Ok(Coverage {
        log10_total,
        log10_fraction: log10_total - global_log10,
    })
}

pub fn coverage_of_training_space<T: Scalar>(subs: &[Subspace<T>], global: &AxisRect<T>) -> Result<Coverage, MetricsError> {
    let g = log_volume(global);
    if g.degenerate {
        return Err(MetricsError::DegenerateGlobal);
    }
    let vols: Vec<f64> = subs.iter().map(|s| s.log_volume().log10.to_f()).collect();
    coverage_from_log_volumes(&vols, g.log10.to_f())
}
