//! Independent reference implementations used as test oracles. None of these
//! call into the code paths they check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zsmace::mace::Params;
use zsmace::simulate::{self, SyntheticBundle};
use zsmace::{LabelSpace, PredictionMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space(k: usize) -> LabelSpace {
    LabelSpace::new((0..k).map(|c| format!("c{c}"))).unwrap()
}

pub fn matrix(rows: Vec<Vec<Option<usize>>>) -> PredictionMatrix {
    let items = (0..rows.len()).map(|i| format!("i{i}")).collect();
    let anns = (0..rows[0].len()).map(|j| format!("a{j}")).collect();
    PredictionMatrix::from_rows(items, anns, rows).unwrap()
}

/// Random matrix with some missing cells but no empty row or column.
pub fn random_matrix(rng: &mut ChaCha8Rng, items: usize, annotators: usize, k: usize, missing: f64) -> PredictionMatrix {
    let mut rows: Vec<Vec<Option<usize>>> = (0..items)
        .map(|_| {
            (0..annotators)
                .map(|_| (rng.random::<f64>() >= missing).then(|| rng.random_range(0..k)))
                .collect()
        })
        .collect();
    for row in rows.iter_mut() {
        if row.iter().all(Option::is_none) {
            let j = rng.random_range(0..annotators);
            row[j] = Some(rng.random_range(0..k));
        }
    }
    for j in 0..annotators {
        if rows.iter().all(|r| r[j].is_none()) {
            let i = rng.random_range(0..items);
            rows[i][j] = Some(rng.random_range(0..k));
        }
    }
    matrix(rows)
}

pub fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

pub fn random_params(rng: &mut ChaCha8Rng, annotators: usize, k: usize) -> Params {
    Params {
        theta: (0..annotators).map(|_| rng.random_range(0.05..0.95)).collect(),
        xi: (0..annotators).map(|_| random_distribution(rng, k)).collect(),
    }
}

/// P(y | g) for one cell, summing explicitly over the spam indicator.
fn cell_probability(theta: f64, xi: &[f64], y: usize, g: usize) -> f64 {
    let copy = theta * if y == g { 1.0 } else { 0.0 };
    let spam = (1.0 - theta) * xi[y];
    copy + spam
}

/// Visits every gold assignment in `0..k` ^ `items`.
fn for_each_assignment(items: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut assignment = vec![0usize; items];
    loop {
        f(&assignment);
        let mut pos = 0;
        loop {
            if pos == items {
                return;
            }
            assignment[pos] += 1;
            if assignment[pos] < k {
                break;
            }
            assignment[pos] = 0;
            pos += 1;
        }
    }
}

fn joint(matrix: &PredictionMatrix, params: &Params, assignment: &[usize]) -> f64 {
    let k = params.xi[0].len() as f64;
    let mut p = 1.0;
    for (i, &g) in assignment.iter().enumerate() {
        p /= k;
        for j in 0..matrix.num_annotators() {
            if let Some(y) = matrix.get(i, j) {
                p *= cell_probability(params.theta[j], &params.xi[j], y, g);
            }
        }
    }
    p
}

/// log P(y) by exhaustive enumeration of all K^I gold assignments.
pub fn brute_force_log_likelihood(matrix: &PredictionMatrix, params: &Params) -> f64 {
    let k = params.xi[0].len();
    let mut total = 0.0;
    for_each_assignment(matrix.num_items(), k, |a| total += joint(matrix, params, a));
    total.ln()
}

/// P(G_i = g | y) for every item, by exhaustive enumeration.
pub fn brute_force_posteriors(matrix: &PredictionMatrix, params: &Params) -> Vec<Vec<f64>> {
    let k = params.xi[0].len();
    let items = matrix.num_items();
    let mut mass = vec![vec![0.0; k]; items];
    let mut total = 0.0;
    for_each_assignment(items, k, |a| {
        let p = joint(matrix, params, a);
        total += p;
        for (i, &g) in a.iter().enumerate() {
            mass[i][g] += p;
        }
    });
    mass.iter()
        .map(|row| row.iter().map(|m| m / total).collect())
        .collect()
}

/// Kappa with chance agreement computed over all item pairs.
pub fn kappa_oracle(a: &[Option<usize>], b: &[Option<usize>]) -> Option<(f64, bool)> {
    let pairs: Vec<(usize, usize)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let observed = pairs.iter().filter(|(x, y)| x == y).count() as f64 / n;
    let mut cross = 0usize;
    for &(x, _) in &pairs {
        for &(_, y) in &pairs {
            if x == y {
                cross += 1;
            }
        }
    }
    let chance = cross as f64 / (n * n);
    if chance == 1.0 {
        return Some((if observed == 1.0 { 1.0 } else { 0.0 }, true));
    }
    Some(((observed - chance) / (1.0 - chance), false))
}

/// Average ranks by counting smaller and equal elements.
pub fn rank_oracle(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&w| w < v).count() as f64;
            let equal = values.iter().filter(|&&w| w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Spearman's rho through the raw-sum Pearson formula on counted ranks.
pub fn spearman_oracle(x: &[f64], y: &[f64]) -> (f64, bool) {
    let rx = rank_oracle(x);
    let ry = rank_oracle(y);
    let n = x.len() as f64;
    let sx: f64 = rx.iter().sum();
    let sy: f64 = ry.iter().sum();
    let sxx: f64 = rx.iter().map(|v| v * v).sum();
    let syy: f64 = ry.iter().map(|v| v * v).sum();
    let sxy: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx.abs() < 1e-9 || vy.abs() < 1e-9 {
        return (0.0, true);
    }
    ((n * sxy - sx * sy) / (vx * vy).sqrt(), false)
}

/// Macro-F1 from an explicit confusion matrix with precision and recall.
pub fn macro_f1_oracle(predicted: &[usize], gold: &[usize], k: usize) -> f64 {
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &g) in predicted.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let mut total = 0.0;
    for (c, row) in confusion.iter().enumerate() {
        let tp = row[c] as f64;
        let predicted_c: usize = confusion.iter().map(|r| r[c]).sum();
        let gold_c: usize = row.iter().sum();
        let precision = if predicted_c == 0 { 0.0 } else { tp / predicted_c as f64 };
        let recall = if gold_c == 0 { 0.0 } else { tp / gold_c as f64 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / k as f64
}

/// Modal label per row by scanning classes in order.
pub fn majority_oracle(matrix: &PredictionMatrix, k: usize) -> Vec<usize> {
    (0..matrix.num_items())
        .map(|i| {
            let counts: Vec<usize> = (0..k)
                .map(|c| (0..matrix.num_annotators()).filter(|&j| matrix.get(i, j) == Some(c)).count())
                .collect();
            let best = *counts.iter().max().unwrap();
            counts.iter().position(|&c| c == best).unwrap()
        })
        .collect()
}

pub fn cosine_oracle(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

/// Bundle with competences equally spaced in [0.10, 0.95] and random spam
/// distributions.
pub fn spread_bundle(k: usize, annotators: usize, items: usize, seed: u64) -> SyntheticBundle {
    let mut rng = rng(seed ^ 0x5eed_0000);
    let theta = linspace(0.10, 0.95, annotators);
    let xi: Vec<Vec<f64>> = (0..annotators).map(|_| random_distribution(&mut rng, k)).collect();
    simulate::sample(items, &space(k), &theta, &xi, 0.0, seed).unwrap()
}

/// Three competent annotators and three spammers skewed towards class 0.
pub fn spammer_bundle(items: usize, seed: u64) -> SyntheticBundle {
    let mut rng = rng(seed ^ 0xbad_5eed);
    let mut theta: Vec<f64> = (0..3).map(|_| rng.random_range(0.8..0.95)).collect();
    theta.extend((0..3).map(|_| rng.random_range(0.05..0.2)));
    let mut xi = vec![vec![0.5, 0.5]; 3];
    for _ in 0..3 {
        let skew = rng.random_range(0.8..0.95);
        xi.push(vec![skew, 1.0 - skew]);
    }
    simulate::sample(items, &space(2), &theta, &xi, 0.0, seed).unwrap()
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> f64 {
    predicted.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / gold.len() as f64
}
