//! Siamese zero-shot head: cosine similarities between an item embedding and
//! the per-class description embeddings, a softmax over them, and an argmax
//! prediction per description set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DescriptionSet, EmbeddingSet, LabelSpace, PredictionMatrix};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

const PLACEHOLDER: &str = "{}";

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// Scores, softmax probabilities and the argmax class for one item under one
/// description set.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityRow {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

pub fn softmax_predict(scores: &[f64], temperature: f64) -> Result<SimilarityRow> {
    if scores.len() < 2 {
        return Err(Error::InvalidParameters(format!(
            "softmax needs at least 2 scores, got {}",
            scores.len()
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::InvalidScore(pos));
    }
    let predicted = argmax(scores);
    let max = scores[predicted];
    let mut probabilities: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    Ok(SimilarityRow {
        scores: scores.to_vec(),
        probabilities,
        predicted,
    })
}

/// Key under which the embedding of a set's description for a class is stored.
pub fn description_key(set: &str, class: &str) -> String {
    format!("{set}/{class}")
}

/// Hard predictions plus the per-cell probabilities behind them.
#[derive(Debug, Clone)]
pub struct ZeroShotPredictions {
    pub matrix: PredictionMatrix,
    num_classes: usize,
    /// Items × sets × classes, row-major.
    probabilities: Vec<f64>,
}

impl ZeroShotPredictions {
    pub fn probabilities(&self, item: usize, set: usize) -> &[f64] {
        let k = self.num_classes;
        let start = (item * self.matrix.num_annotators() + set) * k;
        &self.probabilities[start..start + k]
    }
}

/// Predicts every item with every description set. Column `j` of the
/// resulting matrix holds the argmax predictions of `sets[j]`.
pub fn predict_matrix(
    items: &EmbeddingSet,
    sets: &[DescriptionSet],
    desc_embeddings: &EmbeddingSet,
    space: &LabelSpace,
    temperature: f64,
) -> Result<ZeroShotPredictions> {
    let k = space.len();
    // Resolve description vectors up front: sets × classes.
    let mut class_vectors: Vec<Vec<&[f64]>> = Vec::with_capacity(sets.len());
    for set in sets {
        let mut row = Vec::with_capacity(k);
        for class in space.classes() {
            let key = description_key(set.name(), class);
            let vector = desc_embeddings.get(&key).ok_or(Error::MissingEmbedding(key))?;
            if vector.len() != items.dim() {
                return Err(Error::DimensionMismatch {
                    expected: items.dim(),
                    found: vector.len(),
                });
            }
            row.push(vector);
        }
        class_vectors.push(row);
    }

    let per_item: Vec<Vec<SimilarityRow>> = items
        .vectors()
        .par_iter()
        .map(|item| {
            class_vectors
                .iter()
                .map(|classes| {
                    let scores = classes
                        .iter()
                        .map(|desc| cosine(item, desc))
                        .collect::<Result<Vec<_>>>()?;
                    softmax_predict(&scores, temperature)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(items.len() * sets.len());
    let mut probabilities = Vec::with_capacity(items.len() * sets.len() * k);
    for row in per_item {
        for cell in row {
            cells.push(Some(cell.predicted));
            probabilities.extend(cell.probabilities);
        }
    }
    let matrix = PredictionMatrix::new(
        items.ids().to_vec(),
        sets.iter().map(|s| s.name().to_string()).collect(),
        cells,
    )?;
    Ok(ZeroShotPredictions {
        matrix,
        num_classes: k,
        probabilities,
    })
}

/// A sentence template with a single `{}` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub id: String,
    pub template: String,
}

/// A named class → word mapping substituted into patterns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub words: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatternGrid {
    pub patterns: Vec<Pattern>,
    pub variants: Vec<Variant>,
}

/// One description set per (pattern, variant) pair, patterns outer.
pub fn expand_patterns(grid: &PatternGrid, space: &LabelSpace) -> Result<Vec<DescriptionSet>> {
    for pattern in &grid.patterns {
        if pattern.template.matches(PLACEHOLDER).count() != 1 {
            return Err(Error::BadPattern(pattern.template.clone()));
        }
    }
    let mut sets = Vec::with_capacity(grid.patterns.len() * grid.variants.len());
    for pattern in &grid.patterns {
        for variant in &grid.variants {
            let descriptions = variant
                .words
                .iter()
                .map(|(class, word)| (class.as_str(), pattern.template.replacen(PLACEHOLDER, word, 1)));
            sets.push(DescriptionSet::new(
                format!("{}×{}", pattern.id, variant.name),
                descriptions,
                space,
            )?);
        }
    }
    Ok(sets)
}
