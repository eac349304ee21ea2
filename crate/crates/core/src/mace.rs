//! MACE: each annotator `j` copies the latent gold label with probability
//! `theta[j]` and otherwise emits a label from its own spam distribution
//! `xi[j]`. Parameters are fitted by smoothed (MAP) EM with random restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_matrix, LabelSpace, PredictionMatrix};
use crate::zeroshot::argmax;

/// How spam distributions are initialised for each restart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiInit {
    /// Normalised uniform draws per row.
    #[default]
    Random,
    /// Every row starts at 1/K. Makes the fit covariant under class relabeling.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub restarts: usize,
    pub max_iterations: usize,
    pub rel_tolerance: f64,
    pub theta_smoothing: f64,
    pub xi_smoothing: f64,
    pub seed: u64,
    pub xi_init: XiInit,
    /// Range of the uniform draw for initial competences.
    pub theta_init: (f64, f64),
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iterations: 100,
            rel_tolerance: 1e-6,
            theta_smoothing: 0.5,
            xi_smoothing: 0.1,
            seed: 0,
            xi_init: XiInit::Random,
            theta_init: (0.3, 0.9),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.restarts == 0 {
            return bad("restarts must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.rel_tolerance > 0.0 && self.rel_tolerance.is_finite()) {
            return bad(format!("rel_tolerance must be positive, got {}", self.rel_tolerance));
        }
        if !(self.theta_smoothing > 0.0 && self.theta_smoothing.is_finite()) {
            return bad(format!("theta_smoothing must be positive, got {}", self.theta_smoothing));
        }
        if !(self.xi_smoothing > 0.0 && self.xi_smoothing.is_finite()) {
            return bad(format!("xi_smoothing must be positive, got {}", self.xi_smoothing));
        }
        let (lo, hi) = self.theta_init;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad(format!("theta_init must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"));
        }
        Ok(())
    }

    pub fn restart_seed(&self, restart: usize) -> u64 {
        self.seed.wrapping_add(restart as u64)
    }
}

/// Competences and spam distributions, one entry per annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub theta: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
}

impl Params {
    pub fn num_classes(&self) -> usize {
        self.xi.first().map_or(0, Vec::len)
    }

    fn initial(num_annotators: usize, k: usize, config: &EmConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = config.theta_init;
        let theta = (0..num_annotators).map(|_| rng.random_range(lo..hi)).collect();
        let xi = (0..num_annotators)
            .map(|_| match config.xi_init {
                XiInit::Uniform => vec![1.0 / k as f64; k],
                XiInit::Random => {
                    // Shift away from zero so every row is strictly positive.
                    let draws: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
                    let total: f64 = draws.iter().sum();
                    draws.into_iter().map(|d| d / total).collect()
                }
            })
            .collect();
        Self { theta, xi }
    }
}

/// Probability that an annotator with competence `theta` and spam
/// distribution `xi` reports `observed` when the gold label is `gold`.
pub fn cell_likelihood(theta: f64, xi: &[f64], observed: usize, gold: usize) -> f64 {
    let copy = if observed == gold { theta } else { 0.0 };
    copy + (1.0 - theta) * xi[observed]
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-gold-hypothesis log joint of an item's observed labels (without the
/// uniform prior).
fn item_log_joint(row: &[Option<usize>], params: &Params, out: &mut [f64]) {
    for (g, slot) in out.iter_mut().enumerate() {
        *slot = row
            .iter()
            .enumerate()
            .filter_map(|(j, cell)| cell.map(|y| cell_likelihood(params.theta[j], &params.xi[j], y, g).ln()))
            .sum();
    }
}

/// Log probability of the observed cells, marginalising gold labels under a
/// uniform prior and spam indicators.
pub fn log_marginal_likelihood(matrix: &PredictionMatrix, params: &Params) -> f64 {
    let k = params.num_classes();
    let log_prior = -(k as f64).ln();
    let mut scratch = vec![0.0; k];
    matrix
        .rows()
        .map(|row| {
            item_log_joint(row, params, &mut scratch);
            log_sum_exp(&scratch) + log_prior
        })
        .sum()
}

/// Log-likelihood plus the log-density of the Beta/Dirichlet priors implied by
/// the smoothing constants. EM with the smoothed M-step never decreases it.
pub fn penalized_objective(matrix: &PredictionMatrix, params: &Params, config: &EmConfig) -> f64 {
    let theta_penalty: f64 = params.theta.iter().map(|t| t.ln() + (1.0 - t).ln()).sum();
    let xi_penalty: f64 = params.xi.iter().flatten().map(|x| x.ln()).sum();
    log_marginal_likelihood(matrix, params)
        + config.theta_smoothing * theta_penalty
        + config.xi_smoothing * xi_penalty
}

/// Expectations computed by the E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct EStep {
    /// Items × classes gold posteriors.
    pub posteriors: Vec<Vec<f64>>,
    /// Items × annotators posterior probability of copying gold (not spamming);
    /// `None` for missing cells.
    pub non_spam: Vec<Option<f64>>,
    pub log_likelihood: f64,
}

pub fn e_step(matrix: &PredictionMatrix, params: &Params) -> EStep {
    let k = params.num_classes();
    let n = matrix.num_annotators();
    let log_prior = -(k as f64).ln();
    let mut posteriors = Vec::with_capacity(matrix.num_items());
    let mut non_spam = Vec::with_capacity(matrix.cells().len());
    let mut log_likelihood = 0.0;
    let mut scratch = vec![0.0; k];

    for row in matrix.rows() {
        item_log_joint(row, params, &mut scratch);
        let norm = log_sum_exp(&scratch);
        log_likelihood += norm + log_prior;
        let r: Vec<f64> = scratch.iter().map(|s| (s - norm).exp()).collect();
        for (j, cell) in row.iter().enumerate().take(n) {
            non_spam.push(cell.map(|y| {
                let theta = params.theta[j];
                r[y] * theta / cell_likelihood(theta, &params.xi[j], y, y)
            }));
        }
        posteriors.push(r);
    }
    EStep {
        posteriors,
        non_spam,
        log_likelihood,
    }
}

/// Smoothed parameter update from E-step expectations.
pub fn m_step(matrix: &PredictionMatrix, expectations: &EStep, k: usize, config: &EmConfig) -> Params {
    let n = matrix.num_annotators();
    let mut copied = vec![0.0; n];
    let mut observed = vec![0.0; n];
    let mut spam_counts = vec![vec![0.0; k]; n];

    for (i, row) in matrix.rows().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if let Some(y) = *cell {
                let q = expectations.non_spam[i * n + j].expect("observed cell has an expectation");
                copied[j] += q;
                observed[j] += 1.0;
                spam_counts[j][y] += 1.0 - q;
            }
        }
    }

    let dt = config.theta_smoothing;
    let dx = config.xi_smoothing;
    let theta = copied
        .iter()
        .zip(&observed)
        .map(|(c, o)| (dt + c) / (2.0 * dt + o))
        .collect();
    let xi = spam_counts
        .into_iter()
        .map(|counts| {
            let total: f64 = counts.iter().sum::<f64>() + k as f64 * dx;
            counts.into_iter().map(|c| (dx + c) / total).collect()
        })
        .collect();
    Params { theta, xi }
}

/// Result of a single EM run from one initialisation.
#[derive(Debug, Clone)]
pub struct RestartFit {
    pub params: Params,
    pub expectations: EStep,
    pub iterations: usize,
    pub converged: bool,
    /// Penalised objective after initialisation and after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Runs EM from the initialisation derived from `seed`. `matrix` must already
/// be validated against a space of `k` classes.
pub fn fit_restart(matrix: &PredictionMatrix, k: usize, config: &EmConfig, seed: u64) -> RestartFit {
    let mut params = Params::initial(matrix.num_annotators(), k, config, seed);
    let mut expectations = e_step(matrix, &params);
    let mut objective_trace = vec![penalized_objective(matrix, &params, config)];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < config.max_iterations {
        iterations += 1;
        params = m_step(matrix, &expectations, k, config);
        let previous = expectations.log_likelihood;
        expectations = e_step(matrix, &params);
        objective_trace.push(penalized_objective(matrix, &params, config));
        let improvement = (expectations.log_likelihood - previous) / previous.abs().max(f64::MIN_POSITIVE);
        if improvement.abs() < config.rel_tolerance {
            converged = true;
            break;
        }
    }
    RestartFit {
        params,
        expectations,
        iterations,
        converged,
        objective_trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaceModel {
    pub theta: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub posteriors: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Which restart won, and how many iterations it ran.
    pub restart_index: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Mean posterior probability of copying gold, per annotator.
    pub mean_non_spam: Vec<f64>,
    pub restart_seeds: Vec<u64>,
    pub restart_log_likelihoods: Vec<f64>,
}

impl MaceModel {
    pub fn num_classes(&self) -> usize {
        self.xi.first().map_or(0, Vec::len)
    }
}

pub fn fit_em(matrix: &PredictionMatrix, space: &LabelSpace, config: &EmConfig) -> Result<MaceModel> {
    config.validate()?;
    validate_matrix(matrix, space).into_result()?;
    let k = space.len();

    let restart_seeds: Vec<u64> = (0..config.restarts).map(|r| config.restart_seed(r)).collect();
    let fits: Vec<RestartFit> = restart_seeds
        .par_iter()
        .map(|&seed| fit_restart(matrix, k, config, seed))
        .collect();

    let mut best = 0;
    for (r, fit) in fits.iter().enumerate().skip(1) {
        if fit.expectations.log_likelihood > fits[best].expectations.log_likelihood {
            best = r;
        }
    }
    let restart_log_likelihoods = fits.iter().map(|f| f.expectations.log_likelihood).collect();
    let winner = fits.into_iter().nth(best).expect("at least one restart");

    let n = matrix.num_annotators();
    let mut non_spam_sum = vec![0.0; n];
    let mut observed = vec![0usize; n];
    for (idx, q) in winner.expectations.non_spam.iter().enumerate() {
        if let Some(q) = q {
            non_spam_sum[idx % n] += q;
            observed[idx % n] += 1;
        }
    }
    let mean_non_spam = non_spam_sum
        .iter()
        .zip(&observed)
        .map(|(s, &o)| s / o as f64)
        .collect();

    Ok(MaceModel {
        theta: winner.params.theta,
        xi: winner.params.xi,
        posteriors: winner.expectations.posteriors,
        log_likelihood: winner.expectations.log_likelihood,
        restart_index: best,
        iterations: winner.iterations,
        converged: winner.converged,
        mean_non_spam,
        restart_seeds,
        restart_log_likelihoods,
    })
}

/// Posterior-decoded labels with the posterior mass of each choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
}

pub fn decode(model: &MaceModel) -> Decoded {
    let (labels, confidence) = model
        .posteriors
        .iter()
        .map(|r| {
            let g = argmax(r);
            (g, r[g])
        })
        .unzip();
    Decoded { labels, confidence }
}

/// Annotators sorted by descending competence, ties by id.
pub fn rank_by_theta(model: &MaceModel, annotator_ids: &[String]) -> Vec<(String, f64)> {
    assert_eq!(
        model.theta.len(),
        annotator_ids.len(),
        "one id per fitted annotator"
    );
    let mut ranked: Vec<(String, f64)> = annotator_ids.iter().cloned().zip(model.theta.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<Option<usize>>>) -> PredictionMatrix {
        let items = (0..rows.len()).map(|i| format!("i{i}")).collect();
        let anns = (0..rows[0].len()).map(|j| format!("a{j}")).collect();
        PredictionMatrix::from_rows(items, anns, rows).unwrap()
    }

    fn space(k: usize) -> LabelSpace {
        LabelSpace::new((0..k).map(|c| format!("c{c}"))).unwrap()
    }

    #[test]
    fn cell_likelihood_examples() {
        let eps = 1e-6;
        let xi = [0.3, 0.7];
        let v = cell_likelihood(1.0 - eps, &xi, 1, 1);
        assert!((v - (1.0 - eps * (1.0 - 0.7))).abs() < 1e-15);
        for k in 0..2 {
            for g in 0..2 {
                assert_eq!(cell_likelihood(0.0, &xi, k, g), xi[k]);
            }
        }
        assert!((cell_likelihood(0.6, &[0.5, 0.5], 0, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn single_cell_spammer_likelihood() {
        let m = matrix(vec![vec![Some(1)]]);
        let params = Params { theta: vec![0.0], xi: vec![vec![0.5, 0.5]] };
        assert!((log_marginal_likelihood(&m, &params) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn likelihood_is_invariant_under_class_relabeling() {
        let m = matrix(vec![
            vec![Some(0), Some(2)],
            vec![Some(1), Some(1)],
            vec![Some(2), None],
        ]);
        let params = Params {
            theta: vec![0.7, 0.4],
            xi: vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]],
        };
        let perm = [2, 0, 1];
        let permuted = PredictionMatrix::new(
            m.item_ids().to_vec(),
            m.annotator_ids().to_vec(),
            m.cells().iter().map(|c| c.map(|y| perm[y])).collect(),
        )
        .unwrap();
        let xi = params
            .xi
            .iter()
            .map(|row| {
                let mut out = vec![0.0; 3];
                for (k, &p) in row.iter().enumerate() {
                    out[perm[k]] = p;
                }
                out
            })
            .collect();
        let permuted_params = Params { theta: params.theta.clone(), xi };
        let a = log_marginal_likelihood(&m, &params);
        let b = log_marginal_likelihood(&permuted, &permuted_params);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn unanimous_annotators_are_trusted() {
        let labels = [0, 1, 1, 0, 1, 0, 0, 1, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0];
        let rows = labels.iter().map(|&y| vec![Some(y); 4]).collect();
        let m = matrix(rows);
        let model = fit_em(&m, &space(2), &EmConfig::default()).unwrap();
        assert!(model.theta.iter().all(|&t| t > 0.9), "{:?}", model.theta);
        assert_eq!(decode(&model).labels, labels);
    }

    #[test]
    fn single_annotator_is_reproduced() {
        let labels = [2, 0, 0, 1, 2, 2, 0, 0, 0, 1];
        let m = matrix(labels.iter().map(|&y| vec![Some(y)]).collect());
        let model = fit_em(&m, &space(3), &EmConfig::default()).unwrap();
        assert_eq!(decode(&model).labels, labels);
    }

    #[test]
    fn invalid_input_is_rejected() {
        let m = matrix(vec![vec![Some(0), Some(4)]]);
        assert!(matches!(fit_em(&m, &space(2), &EmConfig::default()), Err(Error::InvalidMatrix(_))));
        let m = matrix(vec![vec![Some(0), Some(1)]]);
        let config = EmConfig { xi_smoothing: 0.0, ..EmConfig::default() };
        assert!(matches!(fit_em(&m, &space(2), &config), Err(Error::InvalidConfig(_))));
    }

    fn model_with_posteriors(posteriors: Vec<Vec<f64>>, theta: Vec<f64>) -> MaceModel {
        let k = posteriors[0].len();
        MaceModel {
            xi: vec![vec![1.0 / k as f64; k]; theta.len()],
            theta,
            posteriors,
            log_likelihood: -1.0,
            restart_index: 0,
            iterations: 1,
            converged: true,
            mean_non_spam: vec![],
            restart_seeds: vec![0],
            restart_log_likelihoods: vec![-1.0],
        }
    }

    #[test]
    fn decode_examples() {
        let model = model_with_posteriors(vec![vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]], vec![0.5]);
        let decoded = decode(&model);
        assert_eq!(decoded.labels, vec![0, 0, 1]);
        assert_eq!(decoded.confidence, vec![0.9, 0.5, 0.8]);
    }

    #[test]
    fn ranking_examples() {
        let ids: Vec<String> = vec!["a1".into(), "a2".into()];
        let model = model_with_posteriors(vec![vec![1.0, 0.0]], vec![0.2, 0.8]);
        let ranked = rank_by_theta(&model, &ids);
        assert_eq!(ranked, vec![("a2".to_string(), 0.8), ("a1".to_string(), 0.2)]);

        let ids: Vec<String> = vec!["zeta".into(), "alpha".into(), "mid".into()];
        let model = model_with_posteriors(vec![vec![1.0, 0.0]], vec![0.5, 0.5, 0.7]);
        let order: Vec<String> = rank_by_theta(&model, &ids).into_iter().map(|(id, _)| id).collect();
        assert_eq!(order, vec!["mid", "alpha", "zeta"]);
    }

    #[test]
    fn fits_are_deterministic() {
        let rows = (0..30)
            .map(|i| vec![Some(i % 2), Some((i / 3) % 2), Some(i % 2), None])
            .map(|mut r| {
                r[3] = Some(1);
                r
            })
            .collect();
        let m = matrix(rows);
        let config = EmConfig { seed: 42, ..EmConfig::default() };
        let a = fit_em(&m, &space(2), &config).unwrap();
        let b = fit_em(&m, &space(2), &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.restart_seeds, (42..52).collect::<Vec<u64>>());
    }
}
