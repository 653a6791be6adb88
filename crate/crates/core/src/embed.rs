//! Sentence embeddings: storage, a hashed-trigram toy embedder, cosine
//! similarity and cosine filtering.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Label, Split};
use crate::rng;
use crate::scalar::{dot, norm, Scalar};

/// Cosine threshold used when filtering perturbations.
pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.6;

/// Default embedding dimension, matching the reference network input.
pub const DEFAULT_DIM: usize = 30;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed record: {reason}")]
    Parse { line: usize, reason: String },
    #[error("record '{id}' has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("record '{id}' contains a non-finite entry")]
    NonFinite { id: String },
    #[error("duplicate embedding id '{0}'")]
    DuplicateId(String),
    #[error("record '{0}' has an empty vector")]
    EmptyVector(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("vectors of length {0} and {1} cannot be compared")]
    LengthMismatch(usize, usize),
    #[error("no embedding for id '{0}'")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EmbeddingRecord<T> {
    pub id: String,
    pub origin_id: Option<String>,
    pub label: Label,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub vector: Vec<T>,
}

/// Embeddings indexed by id, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    records: Vec<EmbeddingRecord<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn from_records(records: Vec<EmbeddingRecord<T>>) -> Result<Self, EmbedError> {
        let dim = records.first().map(|r| r.vector.len()).unwrap_or(0);
        let mut store = EmbeddingStore {
            dim,
            records: Vec::with_capacity(records.len()),
            index: HashMap::with_capacity(records.len()),
        };
        for r in records {
            store.push(r)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, record: EmbeddingRecord<T>) -> Result<(), EmbedError> {
        if self.records.is_empty() && self.dim == 0 {
            self.dim = record.vector.len();
        }
        if record.vector.is_empty() {
            return Err(EmbedError::EmptyVector(record.id));
        }
        if record.vector.len() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                id: record.id,
                expected: self.dim,
                found: record.vector.len(),
            });
        }
        if record.vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite { id: record.id });
        }
        if self.index.contains_key(&record.id) {
            return Err(EmbedError::DuplicateId(record.id));
        }
        self.index.insert(record.id.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord<T>] {
        &self.records
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingRecord<T>> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn require(&self, id: &str) -> Result<&EmbeddingRecord<T>, EmbedError> {
        self.get(id).ok_or_else(|| EmbedError::Missing(id.to_string()))
    }

    /// Original sentences, i.e. records without an origin.
    pub fn originals(&self) -> impl Iterator<Item = &EmbeddingRecord<T>> {
        self.records.iter().filter(|r| r.origin_id.is_none())
    }

    /// Perturbation records derived from `origin_id`, in store order.
    pub fn derived_from<'a>(
        &'a self,
        origin_id: &'a str,
    ) -> impl Iterator<Item = &'a EmbeddingRecord<T>> + 'a {
        self.records
            .iter()
            .filter(move |r| r.origin_id.as_deref() == Some(origin_id))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn read_embeddings<T: Scalar, R: Read>(input: R) -> Result<EmbeddingStore<T>, EmbedError> {
    let mut store = EmbeddingStore::from_records(Vec::new())?;
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord<T> =
            serde_json::from_str(&line).map_err(|e| EmbedError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
        store.push(rec)?;
    }
    Ok(store)
}

pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingStore<T>, EmbedError> {
    read_embeddings(std::fs::File::open(path)?)
}

/// Row-aligned embedding matrix (`q × m`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    dim: usize,
    data: Vec<T>,
    row_ids: Vec<String>,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn new(dim: usize) -> Self {
        EmbeddingMatrix {
            dim,
            data: Vec::new(),
            row_ids: Vec::new(),
        }
    }

    /// Builds a matrix from rows; ids default to the row index.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, EmbedError> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut m = Self::new(dim);
        for (i, r) in rows.iter().enumerate() {
            m.push(i.to_string(), r)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, id: impl Into<String>, row: &[T]) -> Result<(), EmbedError> {
        let id = id.into();
        if row.len() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                id,
                expected: self.dim,
                found: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        self.row_ids.push(id);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim.max(1)).take(self.rows())
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

fn trigrams(text: &str) -> Vec<String> {
    let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    let padded: Vec<char> = std::iter::once('^')
        .chain(normalized.chars())
        .chain(std::iter::once('$'))
        .collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Deterministic embedding: character trigrams hashed into `m` signed
/// buckets, then L2-normalized.
pub fn toy_embed<T: Scalar>(text: &str, m: usize, seed: u64) -> Result<Vec<T>, EmbedError> {
    if m < 2 {
        return Err(EmbedError::DimensionTooSmall(m));
    }
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let mut acc = vec![0.0f64; m];
    for g in trigrams(text) {
        let h = rng::keyed_hash(seed, g.as_bytes());
        let bucket = (h % m as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let mut n = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n == 0.0 {
        // Every bucket cancelled; fall back to a single text-keyed axis.
        let h = rng::keyed_hash(seed, text.as_bytes());
        acc[(h % m as u64) as usize] = 1.0;
        n = 1.0;
    }
    Ok(acc.into_iter().map(|v| T::of(v / n)).collect())
}

pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(EmbedError::ZeroVector);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Partitions `perts` into those with cosine strictly above `threshold`
/// and the rest.
pub fn filter_by_cosine<'a, T: Scalar>(
    origin: &EmbeddingRecord<T>,
    perts: &'a [EmbeddingRecord<T>],
    threshold: T,
) -> Result<(Vec<&'a EmbeddingRecord<T>>, Vec<&'a EmbeddingRecord<T>>), EmbedError> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for p in perts {
        if cosine(&origin.vector, &p.vector)? > threshold {
            kept.push(p);
        } else {
            dropped.push(p);
        }
    }
    Ok((kept, dropped))
}
