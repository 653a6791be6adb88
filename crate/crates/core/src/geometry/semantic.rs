//! Semantic subspaces: one hyper-rectangle per sentence over the sentence
//! and its perturbations.

use std::collections::HashMap;

use rayon::prelude::*;

use super::{GeometryError, RotationMode, Subspace, SubspaceMeta};
use crate::dataset::{Corpus, Label};
use crate::embed::{EmbeddingMatrix, EmbeddingStore};
use crate::perturb::PerturbationSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SemanticOptions {
    pub rotation: RotationMode,
    /// Sentences of this label get a subspace.
    pub class: Label,
}

impl Default for SemanticOptions {
    fn default() -> Self {
        SemanticOptions {
            rotation: RotationMode::None,
            class: Label::Pos,
        }
    }
}

/// Builds `hrect({E(s)} ∪ E(P(s)))` for every sentence `s` of the chosen
/// class, in corpus order. Members of `pert_sets` are looked up in `store`
/// by their perturbation id; a sentence with no set yields a degenerate
/// rect at its own embedding.
pub fn semantic_subspaces<T: Scalar>(
    corpus: &Corpus,
    pert_sets: &[PerturbationSet],
    store: &EmbeddingStore<T>,
    opts: SemanticOptions,
) -> Result<Vec<Subspace<T>>, GeometryError> {
    let by_origin: HashMap<&str, &PerturbationSet> =
        pert_sets.iter().map(|s| (s.origin_id.as_str(), s)).collect();
    let sentences: Vec<_> = corpus.with_label(opts.class).collect();
    sentences
        .par_iter()
        .map(|s| {
            let mut x = EmbeddingMatrix::new(store.dim());
            let mut add = |id: &str| -> Result<(), GeometryError> {
                let rec = store
                    .get(id)
                    .ok_or_else(|| GeometryError::MissingEmbedding(id.to_string()))?;
                x.push(id, &rec.vector).expect("store vectors share one dimension");
                Ok(())
            };
            add(&s.id)?;
            if let Some(set) = by_origin.get(s.id.as_str()) {
                for member in &set.members {
                    add(&member.id)?;
                }
            }
            let meta = SubspaceMeta {
                construction: "semantic".into(),
                origin_ids: vec![s.id.clone()],
            };
            Subspace::enclosing(&x, opts.class, opts.rotation, meta)
        })
        .collect()
}
