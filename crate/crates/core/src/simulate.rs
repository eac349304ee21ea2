//! Forward sampler for the annotation model: gold labels, spam indicators
//! and observed labels, with optional missing cells.

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{GoldLabels, LabelSpace, PredictionMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBundle {
    pub gold: GoldLabels,
    pub matrix: PredictionMatrix,
    pub theta_true: Vec<f64>,
    pub xi_true: Vec<Vec<f64>>,
    /// Items × annotators, row-major. `Some(true)` marks a spam draw,
    /// `None` a missing cell.
    pub spam_draws: Vec<Option<bool>>,
    pub seed: u64,
}

impl SyntheticBundle {
    /// Fraction of annotator `j`'s observed cells that equal gold.
    pub fn column_accuracy(&self, annotator: usize) -> f64 {
        let (hits, observed) = self
            .matrix
            .column(annotator)
            .iter()
            .zip(self.gold.labels())
            .filter_map(|(cell, &g)| cell.map(|y| y == g))
            .fold((0usize, 0usize), |(h, o), hit| (h + hit as usize, o + 1));
        hits as f64 / observed as f64
    }
}

/// Zero-padded ids so lexicographic order matches index order.
pub fn annotator_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|j| format!("a{j:0width$}")).collect()
}

pub fn item_ids(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n).map(|i| format!("item{i:0width$}")).collect()
}

fn check_parameters(
    num_items: usize,
    k: usize,
    theta_true: &[f64],
    xi_true: &[Vec<f64>],
    missing_rate: f64,
) -> Result<()> {
    let bad = |msg: String| Err(Error::InvalidParameters(msg));
    if num_items == 0 {
        return bad("need at least one item".into());
    }
    if theta_true.is_empty() {
        return bad("need at least one annotator".into());
    }
    if theta_true.len() != xi_true.len() {
        return bad(format!("{} competences but {} spam distributions", theta_true.len(), xi_true.len()));
    }
    if let Some(t) = theta_true.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return bad(format!("competence {t} outside [0, 1]"));
    }
    for (j, row) in xi_true.iter().enumerate() {
        if row.len() != k {
            return bad(format!("spam distribution {j} has {} entries, expected {k}", row.len()));
        }
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad(format!("spam distribution {j} has a negative or non-finite entry"));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("spam distribution {j} sums to {total}"));
        }
    }
    if !(0.0..1.0).contains(&missing_rate) {
        return bad(format!("missing rate {missing_rate} outside [0, 1)"));
    }
    Ok(())
}

fn draw_categorical(rng: &mut ChaCha8Rng, probabilities: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probabilities.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the cumulative sum: take the last supported class.
    probabilities.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Observation mask with no empty row or column. Empty rows are re-drawn;
/// an empty column then gets one randomly chosen cell switched on.
fn draw_mask(rng: &mut ChaCha8Rng, num_items: usize, n: usize, missing_rate: f64) -> Vec<bool> {
    let mut mask = vec![true; num_items * n];
    if missing_rate == 0.0 {
        return mask;
    }
    for row in mask.chunks_exact_mut(n) {
        loop {
            row.iter_mut().for_each(|c| *c = rng.random::<f64>() >= missing_rate);
            if row.iter().any(|&c| c) {
                break;
            }
        }
    }
    let pick = Uniform::new(0, num_items).expect("at least one item");
    for j in 0..n {
        if !(0..num_items).any(|i| mask[i * n + j]) {
            let i = pick.sample(rng);
            mask[i * n + j] = true;
        }
    }
    mask
}

pub fn sample(
    num_items: usize,
    space: &LabelSpace,
    theta_true: &[f64],
    xi_true: &[Vec<f64>],
    missing_rate: f64,
    seed: u64,
) -> Result<SyntheticBundle> {
    let k = space.len();
    check_parameters(num_items, k, theta_true, xi_true, missing_rate)?;
    let n = theta_true.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let gold_dist = Uniform::new(0, k).expect("non-empty label space");
    let gold: Vec<usize> = (0..num_items).map(|_| gold_dist.sample(&mut rng)).collect();
    let mask = draw_mask(&mut rng, num_items, n, missing_rate);

    let mut cells = Vec::with_capacity(num_items * n);
    let mut spam_draws = Vec::with_capacity(num_items * n);
    for (i, &g) in gold.iter().enumerate() {
        for j in 0..n {
            if !mask[i * n + j] {
                cells.push(None);
                spam_draws.push(None);
                continue;
            }
            let spam = rng.random::<f64>() >= theta_true[j];
            let label = if spam { draw_categorical(&mut rng, &xi_true[j]) } else { g };
            cells.push(Some(label));
            spam_draws.push(Some(spam));
        }
    }

    let items = item_ids(num_items);
    let matrix = PredictionMatrix::new(items.clone(), annotator_ids(n), cells)?;
    Ok(SyntheticBundle {
        gold: GoldLabels::new(items, gold, space)?,
        matrix,
        theta_true: theta_true.to_vec(),
        xi_true: xi_true.to_vec(),
        spam_draws,
        seed,
    })
}
