//! Aggregation baselines and evaluation: majority voting, Cohen's kappa,
//! macro-F1, Spearman's rho, and the per-annotator ranking report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mace::{rank_by_theta, MaceModel};
use crate::types::{validate_matrix, GoldLabels, LabelSpace, PredictionMatrix};

/// Per-item modal label over observed cells; lowest class wins ties.
/// Items without any observed cell are not expected (see `validate_matrix`)
/// and decode to class 0.
pub fn majority_vote(matrix: &PredictionMatrix) -> Vec<usize> {
    majority_vote_with_support(matrix).0
}

/// Majority labels together with the fraction of observed votes they received.
pub fn majority_vote_with_support(matrix: &PredictionMatrix) -> (Vec<usize>, Vec<f64>) {
    matrix
        .rows()
        .map(|row| {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for y in row.iter().flatten() {
                *counts.entry(*y).or_default() += 1;
            }
            let observed: usize = counts.values().sum();
            // BTreeMap iterates in ascending class order; keep the first maximum.
            let (label, votes) = counts
                .into_iter()
                .fold((0, 0), |best, (k, c)| if c > best.1 { (k, c) } else { best });
            let support = if observed == 0 { 0.0 } else { votes as f64 / observed as f64 };
            (label, support)
        })
        .unzip()
}

/// A statistic together with a flag marking the degenerate-input convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

/// Cohen's kappa over the items where both columns are observed.
///
/// When chance agreement is 1 (both columns constant on the same class) the
/// result is 1.0 for perfect observed agreement and 0.0 otherwise, flagged
/// as degenerate.
pub fn cohen_kappa(a: &[Option<usize>], b: &[Option<usize>]) -> Result<Score> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::NoOverlap);
    }
    let n = pairs.len() as f64;
    let k = pairs.iter().map(|&(x, y)| x.max(y)).max().unwrap_or(0) + 1;
    let mut marginal_a = vec![0.0; k];
    let mut marginal_b = vec![0.0; k];
    let mut agree = 0.0;
    for &(x, y) in &pairs {
        marginal_a[x] += 1.0;
        marginal_b[y] += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let observed = agree / n;
    let chance: f64 = marginal_a.iter().zip(&marginal_b).map(|(p, q)| (p / n) * (q / n)).sum();
    if chance >= 1.0 {
        let value = if observed >= 1.0 { 1.0 } else { 0.0 };
        return Ok(Score { value, degenerate: true });
    }
    Ok(Score {
        value: (observed - chance) / (1.0 - chance),
        degenerate: false,
    })
}

/// Mean kappa of each annotator against every other annotator. Pairs that
/// share no observed item are skipped; an annotator overlapping with nobody
/// scores 0.0.
pub fn kappa_scores(matrix: &PredictionMatrix) -> Result<Vec<f64>> {
    let n = matrix.num_annotators();
    if n < 2 {
        return Err(Error::NeedTwoAnnotators);
    }
    let columns: Vec<Vec<Option<usize>>> = (0..n).map(|j| matrix.column(j)).collect();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for a in 0..n {
        for b in a + 1..n {
            match cohen_kappa(&columns[a], &columns[b]) {
                Ok(score) => {
                    for j in [a, b] {
                        sums[j] += score.value;
                        counts[j] += 1;
                    }
                }
                Err(Error::NoOverlap) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect())
}

/// Unweighted mean of per-class F1 over all `num_classes` classes. A class
/// with no predicted and no gold instances contributes 0.
pub fn macro_f1(predicted: &[usize], gold: &[usize], num_classes: usize) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            found: predicted.len(),
        });
    }
    if num_classes == 0 {
        return Err(Error::InvalidParameters("macro-F1 over zero classes".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut predicted_count = vec![0usize; num_classes];
    let mut gold_count = vec![0usize; num_classes];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p >= num_classes || g >= num_classes {
            return Err(Error::InvalidParameters(format!(
                "label {} outside {num_classes} classes",
                p.max(g)
            )));
        }
        predicted_count[p] += 1;
        gold_count[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|k| {
            // 2PR/(P+R) == 2TP/(|pred| + |gold|)
            let denom = predicted_count[k] + gold_count[k];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[k] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

/// 1-based ranks; tied values share the mean of their rank range.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end hold ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks. A constant input
/// yields 0.0 flagged as degenerate.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<Score> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewPoints(x.len()));
    }
    if let Some(pos) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::InvalidScore(pos % x.len()));
    }
    Ok(match pearson(&average_ranks(x), &average_ranks(y)) {
        Some(value) => Score { value, degenerate: false },
        None => Score { value: 0.0, degenerate: true },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRow {
    pub annotator_id: String,
    pub theta: f64,
    /// Absent when the matrix has a single annotator.
    pub kappa_mean: Option<f64>,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub rho_theta_f1: Score,
    pub rho_kappa_f1: Option<Score>,
    pub rho_theta_accuracy: Score,
}

/// Per-annotator competence, agreement and (with gold) quality, ordered as
/// [`rank_by_theta`] orders annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub rows: Vec<AnnotatorRow>,
    pub summary: Option<Correlations>,
}

pub fn ranking_report(
    matrix: &PredictionMatrix,
    model: &MaceModel,
    gold: Option<&GoldLabels>,
    space: &LabelSpace,
) -> Result<RankingReport> {
    validate_matrix(matrix, space).into_result()?;
    let n = matrix.num_annotators();
    if model.theta.len() != n || model.num_classes() != space.len() {
        return Err(Error::InvalidParameters(
            "model was not fitted on this matrix".into(),
        ));
    }
    let kappas = if n >= 2 { Some(kappa_scores(matrix)?) } else { None };

    let quality: Option<Vec<(f64, f64)>> = gold
        .map(|gold| {
            let gold = gold.aligned_to(matrix)?;
            (0..n)
                .map(|j| {
                    let (pred, truth): (Vec<usize>, Vec<usize>) = matrix
                        .column(j)
                        .into_iter()
                        .zip(gold.labels())
                        .filter_map(|(p, &g)| Some((p?, g)))
                        .unzip();
                    let f1 = macro_f1(&pred, &truth, space.len())?;
                    let hits = pred.iter().zip(&truth).filter(|(p, g)| p == g).count();
                    Ok((f1, hits as f64 / pred.len() as f64))
                })
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;

    let summary = match &quality {
        Some(quality) if n >= 2 => {
            let f1: Vec<f64> = quality.iter().map(|q| q.0).collect();
            let accuracy: Vec<f64> = quality.iter().map(|q| q.1).collect();
            Some(Correlations {
                rho_theta_f1: spearman_rho(&model.theta, &f1)?,
                rho_kappa_f1: kappas.as_deref().map(|k| spearman_rho(k, &f1)).transpose()?,
                rho_theta_accuracy: spearman_rho(&model.theta, &accuracy)?,
            })
        }
        _ => None,
    };

    let position: BTreeMap<&str, usize> = matrix
        .annotator_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), j))
        .collect();
    let rows = rank_by_theta(model, matrix.annotator_ids())
        .into_iter()
        .map(|(annotator_id, theta)| {
            let j = position[annotator_id.as_str()];
            AnnotatorRow {
                kappa_mean: kappas.as_ref().map(|k| k[j]),
                macro_f1: quality.as_ref().map(|q| q[j].0),
                accuracy: quality.as_ref().map(|q| q[j].1),
                annotator_id,
                theta,
            }
        })
        .collect();
    Ok(RankingReport { rows, summary })
}
