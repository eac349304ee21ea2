//! Domain types shared by every stage of the pipeline.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered set of class identifiers. A class's index is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSpace {
    pub fn new<I, S>(classes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut index = HashMap::with_capacity(classes.len());
        for (k, class) in classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::InvalidLabelSpace(format!("class {k} has an empty identifier")));
            }
            if index.insert(class.clone(), k).is_some() {
                return Err(Error::InvalidLabelSpace(format!("duplicate class `{class}`")));
            }
        }
        Ok(Self { classes, index })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    /// Always false; a label space has at least two classes.
    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.index.get(class).copied()
    }

    pub fn class(&self, index: usize) -> Option<&str> {
        self.classes.get(index).map(String::as_str)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }
}

/// Items × annotators table of class indices; `None` marks a missing cell.
///
/// Construction only checks the shape. Use [`validate_matrix`] to check the
/// remaining invariants against a [`LabelSpace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionMatrix {
    item_ids: Vec<String>,
    annotator_ids: Vec<String>,
    cells: Vec<Option<usize>>,
}

impl PredictionMatrix {
    /// `cells` is row-major: item `i`, annotator `j` lives at `i * N + j`.
    pub fn new(
        item_ids: Vec<String>,
        annotator_ids: Vec<String>,
        cells: Vec<Option<usize>>,
    ) -> Result<Self> {
        let expected = item_ids.len() * annotator_ids.len();
        if cells.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: cells.len(),
            });
        }
        Ok(Self {
            item_ids,
            annotator_ids,
            cells,
        })
    }

    pub fn from_rows(
        item_ids: Vec<String>,
        annotator_ids: Vec<String>,
        rows: Vec<Vec<Option<usize>>>,
    ) -> Result<Self> {
        if rows.len() != item_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: item_ids.len(),
                found: rows.len(),
            });
        }
        let n = annotator_ids.len();
        let mut cells = Vec::with_capacity(rows.len() * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            cells.extend(row);
        }
        Self::new(item_ids, annotator_ids, cells)
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn num_annotators(&self) -> usize {
        self.annotator_ids.len()
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotator_ids
    }

    pub fn get(&self, item: usize, annotator: usize) -> Option<usize> {
        self.cells[item * self.annotator_ids.len() + annotator]
    }

    pub fn row(&self, item: usize) -> &[Option<usize>] {
        let n = self.annotator_ids.len();
        &self.cells[item * n..(item + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Option<usize>]> {
        // chunks_exact(0) panics; a matrix without annotators has no cells.
        self.cells.chunks_exact(self.annotator_ids.len().max(1))
    }

    pub fn column(&self, annotator: usize) -> Vec<Option<usize>> {
        self.rows().map(|row| row[annotator]).collect()
    }

    pub fn cells(&self) -> &[Option<usize>] {
        &self.cells
    }
}

/// A single invariant violation found by [`validate_matrix`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    NoItems,
    NoAnnotators,
    DuplicateItemId { item: usize, id: String },
    DuplicateAnnotatorId { annotator: usize, id: String },
    ClassOutOfRange { item: String, annotator: String, value: usize },
    EmptyItem { item: String },
    EmptyAnnotator { annotator: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoItems => write!(f, "matrix has no items"),
            Violation::NoAnnotators => write!(f, "matrix has no annotators"),
            Violation::DuplicateItemId { item, id } => {
                write!(f, "item {item} repeats id `{id}`")
            }
            Violation::DuplicateAnnotatorId { annotator, id } => {
                write!(f, "annotator {annotator} repeats id `{id}`")
            }
            Violation::ClassOutOfRange {
                item,
                annotator,
                value,
            } => write!(f, "cell ({item}, {annotator}) holds out-of-range class {value}"),
            Violation::EmptyItem { item } => write!(f, "item `{item}` has no observed labels"),
            Violation::EmptyAnnotator { annotator } => {
                write!(f, "annotator `{annotator}` has no observed labels")
            }
        }
    }
}

/// Outcome of [`validate_matrix`]; violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::InvalidMatrix(self.violations))
        }
    }
}

pub fn validate_matrix(matrix: &PredictionMatrix, space: &LabelSpace) -> Validation {
    let mut violations = Vec::new();
    if matrix.num_items() == 0 {
        violations.push(Violation::NoItems);
    }
    if matrix.num_annotators() == 0 {
        violations.push(Violation::NoAnnotators);
    }

    let mut seen = HashSet::new();
    for (i, id) in matrix.item_ids().iter().enumerate() {
        if !seen.insert(id.as_str()) {
            violations.push(Violation::DuplicateItemId {
                item: i,
                id: id.clone(),
            });
        }
    }
    let mut seen = HashSet::new();
    for (j, id) in matrix.annotator_ids().iter().enumerate() {
        if !seen.insert(id.as_str()) {
            violations.push(Violation::DuplicateAnnotatorId {
                annotator: j,
                id: id.clone(),
            });
        }
    }
    if matrix.num_items() == 0 || matrix.num_annotators() == 0 {
        return Validation { violations };
    }

    let k = space.len();
    let mut column_counts = vec![0usize; matrix.num_annotators()];
    for (i, row) in matrix.rows().enumerate() {
        let mut observed = 0;
        for (j, cell) in row.iter().enumerate() {
            if let Some(value) = *cell {
                observed += 1;
                column_counts[j] += 1;
                if value >= k {
                    violations.push(Violation::ClassOutOfRange {
                        item: matrix.item_ids()[i].clone(),
                        annotator: matrix.annotator_ids()[j].clone(),
                        value,
                    });
                }
            }
        }
        if observed == 0 {
            violations.push(Violation::EmptyItem {
                item: matrix.item_ids()[i].clone(),
            });
        }
    }
    for (j, &count) in column_counts.iter().enumerate() {
        if count == 0 {
            violations.push(Violation::EmptyAnnotator {
                annotator: matrix.annotator_ids()[j].clone(),
            });
        }
    }
    Validation { violations }
}

/// Known true labels for evaluation, one per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabels {
    item_ids: Vec<String>,
    labels: Vec<usize>,
}

impl GoldLabels {
    pub fn new(item_ids: Vec<String>, labels: Vec<usize>, space: &LabelSpace) -> Result<Self> {
        if item_ids.len() != labels.len() {
            return Err(Error::InvalidGold(format!(
                "{} item ids but {} labels",
                item_ids.len(),
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &item_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidGold(format!("duplicate item id `{id}`")));
            }
        }
        if let Some((id, &label)) = item_ids
            .iter()
            .zip(&labels)
            .find(|(_, &label)| label >= space.len())
        {
            return Err(Error::InvalidGold(format!(
                "item `{id}` has out-of-range class {label}"
            )));
        }
        Ok(Self { item_ids, labels })
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Reorders the labels to follow the matrix's item order. Extra gold items
    /// are dropped; a matrix item without gold is an error.
    pub fn aligned_to(&self, matrix: &PredictionMatrix) -> Result<GoldLabels> {
        if self.item_ids == matrix.item_ids() {
            return Ok(self.clone());
        }
        let lookup: HashMap<&str, usize> = self
            .item_ids
            .iter()
            .zip(&self.labels)
            .map(|(id, &label)| (id.as_str(), label))
            .collect();
        let labels = matrix
            .item_ids()
            .iter()
            .map(|id| {
                lookup
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidGold(format!("no gold label for item `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GoldLabels {
            item_ids: matrix.item_ids().to_vec(),
            labels,
        })
    }
}

/// One label-description set: a description text for every class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionSet {
    name: String,
    texts: Vec<String>,
}

impl DescriptionSet {
    /// Builds a set from `(class, text)` pairs; every class of `space` must
    /// appear exactly once.
    pub fn new<I, C, T>(name: impl Into<String>, descriptions: I, space: &LabelSpace) -> Result<Self>
    where
        I: IntoIterator<Item = (C, T)>,
        C: AsRef<str>,
        T: Into<String>,
    {
        let name = name.into();
        let invalid = |reason: String| Error::InvalidDescriptionSet {
            name: name.clone(),
            reason,
        };
        if name.is_empty() {
            return Err(invalid("empty name".into()));
        }
        let mut texts: Vec<Option<String>> = vec![None; space.len()];
        for (class, text) in descriptions {
            let class = class.as_ref();
            let k = space
                .index_of(class)
                .ok_or_else(|| invalid(format!("unknown class `{class}`")))?;
            let text = text.into();
            if text.is_empty() {
                return Err(invalid(format!("empty description for class `{class}`")));
            }
            if texts[k].replace(text).is_some() {
                return Err(invalid(format!("class `{class}` described twice")));
            }
        }
        let texts = texts
            .into_iter()
            .enumerate()
            .map(|(k, text)| {
                text.ok_or_else(|| invalid(format!("no description for class `{}`", space.classes()[k])))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { name, texts })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Description texts in class-index order.
    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn text(&self, class: usize) -> &str {
        &self.texts[class]
    }
}

/// Id-keyed set of equal-dimension finite vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    dim: usize,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::InvalidEmbeddings(format!(
                "{} ids but {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut index = HashMap::with_capacity(ids.len());
        for (n, (id, vector)) in ids.iter().zip(&vectors).enumerate() {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.is_empty() {
                return Err(Error::InvalidEmbeddings(format!("`{id}` has an empty vector")));
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidEmbeddings(format!("`{id}` has a non-finite component")));
            }
            if index.insert(id.clone(), n).is_some() {
                return Err(Error::InvalidEmbeddings(format!("duplicate id `{id}`")));
            }
        }
        Ok(Self {
            ids,
            vectors,
            index,
            dim,
        })
    }

    pub fn empty() -> Self {
        Self {
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            dim: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Vector dimension; 0 for an empty set.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&n| self.vectors[n].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn binary() -> LabelSpace {
        LabelSpace::new(["positive", "negative"]).unwrap()
    }

    #[test]
    fn label_space_rejects_bad_input() {
        assert!(LabelSpace::new(["only"]).is_err());
        assert!(LabelSpace::new(["a", "a"]).is_err());
        assert!(LabelSpace::new(["a", ""]).is_err());
        let space = LabelSpace::new(["b", "a", "c"]).unwrap();
        assert_eq!(space.index_of("a"), Some(1));
        assert_eq!(space.class(2), Some("c"));
        assert_eq!(space.index_of("z"), None);
    }

    #[test]
    fn valid_matrix_passes() {
        let m = PredictionMatrix::from_rows(
            ids("i", 2),
            ids("a", 2),
            vec![vec![Some(0), Some(1)], vec![Some(1), Some(0)]],
        )
        .unwrap();
        assert!(validate_matrix(&m, &binary()).is_ok());
    }

    #[test]
    fn out_of_range_cell_is_reported() {
        let m = PredictionMatrix::from_rows(
            ids("i", 2),
            ids("a", 2),
            vec![vec![Some(0), Some(5)], vec![Some(1), Some(0)]],
        )
        .unwrap();
        let v = validate_matrix(&m, &binary());
        assert_eq!(
            v.violations,
            vec![Violation::ClassOutOfRange {
                item: "i0".into(),
                annotator: "a1".into(),
                value: 5
            }]
        );
        assert!(matches!(v.into_result(), Err(Error::InvalidMatrix(_))));
    }

    #[test]
    fn empty_row_names_the_item() {
        let m = PredictionMatrix::from_rows(
            ids("i", 2),
            ids("a", 2),
            vec![vec![Some(0), Some(1)], vec![None, None]],
        )
        .unwrap();
        let v = validate_matrix(&m, &binary());
        assert_eq!(v.violations, vec![Violation::EmptyItem { item: "i1".into() }]);
    }

    #[test]
    fn empty_column_and_duplicates_are_reported() {
        let m = PredictionMatrix::from_rows(
            vec!["x".into(), "x".into()],
            vec!["a".into(), "b".into()],
            vec![vec![Some(0), None], vec![Some(1), None]],
        )
        .unwrap();
        let v = validate_matrix(&m, &binary());
        assert!(v.violations.contains(&Violation::DuplicateItemId {
            item: 1,
            id: "x".into()
        }));
        assert!(v
            .violations
            .contains(&Violation::EmptyAnnotator { annotator: "b".into() }));
    }

    #[test]
    fn degenerate_shapes() {
        let m = PredictionMatrix::new(vec![], ids("a", 1), vec![]).unwrap();
        assert_eq!(validate_matrix(&m, &binary()).violations, vec![Violation::NoItems]);
        assert!(PredictionMatrix::new(ids("i", 2), ids("a", 2), vec![Some(0); 3]).is_err());
    }

    #[test]
    fn gold_alignment_follows_matrix_order() {
        let space = binary();
        let gold = GoldLabels::new(vec!["b".into(), "a".into()], vec![1, 0], &space).unwrap();
        let m = PredictionMatrix::from_rows(
            vec!["a".into(), "b".into()],
            ids("n", 1),
            vec![vec![Some(0)], vec![Some(0)]],
        )
        .unwrap();
        let aligned = gold.aligned_to(&m).unwrap();
        assert_eq!(aligned.labels(), &[0, 1]);
        assert!(GoldLabels::new(vec!["a".into()], vec![2], &space).is_err());
    }

    #[test]
    fn description_set_must_cover_space() {
        let space = binary();
        let set = DescriptionSet::new(
            "IH",
            [("negative", "negative"), ("positive", "positive")],
            &space,
        )
        .unwrap();
        assert_eq!(set.texts(), &["positive".to_string(), "negative".to_string()]);
        assert!(DescriptionSet::new("m", [("positive", "great")], &space).is_err());
        assert!(DescriptionSet::new("m", [("positive", ""), ("negative", "bad")], &space).is_err());
        assert!(DescriptionSet::new(
            "m",
            [("positive", "a"), ("positive", "b"), ("negative", "c")],
            &space
        )
        .is_err());
    }

    #[test]
    fn embedding_set_invariants() {
        let set = EmbeddingSet::new(ids("e", 2), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!((set.len(), set.dim()), (2, 3));
        assert_eq!(set.get("e1"), Some(&[0.0, 1.0, 0.0][..]));
        assert!(matches!(
            EmbeddingSet::new(ids("e", 2), vec![vec![1.0; 3], vec![1.0; 4]]),
            Err(Error::DimensionMismatch { expected: 3, found: 4 })
        ));
        assert!(EmbeddingSet::new(vec!["a".into(), "a".into()], vec![vec![1.0], vec![2.0]]).is_err());
        assert!(EmbeddingSet::new(ids("e", 1), vec![vec![f64::NAN]]).is_err());
    }
}
