//! End-to-end pipeline: zero-shot predictions → MACE fit → aggregated labels
//! and annotator ranking, written to an output directory.
//!
//! Every artifact is first written with a `.partial` suffix and renamed only
//! once all of them have been written, so a failed run never leaves a file
//! that looks complete.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::io::{self, AggregatedLabel};
use crate::mace::{decode, fit_em, EmConfig, MaceModel};
use crate::metrics::{macro_f1, majority_vote, majority_vote_with_support, ranking_report, Correlations, RankingReport};
use crate::service::EmbeddingClient;
use crate::types::{validate_matrix, EmbeddingSet, GoldLabels, LabelSpace, PredictionMatrix};
use crate::zeroshot::{description_key, predict_matrix, ZeroShotPredictions};

pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const PROBABILITIES_FILE: &str = "probabilities.jsonl";
pub const AGGREGATED_FILE: &str = "aggregated.csv";
pub const RANKING_FILE: &str = "ranking.tsv";
pub const REPORT_FILE: &str = "report.json";

/// Collects artifacts under `<name>.partial` and renames them on commit.
pub struct Staging {
    dir: PathBuf,
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Staging {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir, staged: Vec::new() })
    }

    /// Temporary path to write `name` to.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let target = self.dir.join(name);
        let partial = self.dir.join(format!("{name}.partial"));
        self.staged.push((partial.clone(), target));
        partial
    }

    pub fn commit(self) -> Result<Vec<PathBuf>> {
        self.staged
            .into_iter()
            .map(|(partial, target)| {
                std::fs::rename(&partial, &target).map_err(|e| Error::io(&target, e))?;
                Ok(target)
            })
            .collect()
    }
}

/// Embeds every description text through the service and keys the vectors
/// as `<set>/<class>`.
fn embed_descriptions(
    client: &EmbeddingClient,
    sets: &[crate::types::DescriptionSet],
    space: &LabelSpace,
) -> Result<EmbeddingSet> {
    let texts: Vec<&str> = sets.iter().flat_map(|s| s.texts().iter().map(String::as_str)).collect();
    let by_text = client.embed(&texts)?;
    let mut ids = Vec::with_capacity(texts.len());
    let mut vectors = Vec::with_capacity(texts.len());
    for set in sets {
        for (class, text) in space.classes().iter().zip(set.texts()) {
            ids.push(description_key(set.name(), class));
            vectors.push(by_text.get(text).expect("service returned every text").to_vec());
        }
    }
    EmbeddingSet::new(ids, vectors)
}

/// Runs the zero-shot stage described by `config`.
pub fn zero_shot(config: &ExperimentConfig, space: &LabelSpace) -> Result<ZeroShotPredictions> {
    let sets = config.description_sets(space)?;
    let items_path = config
        .inputs
        .item_embeddings
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("inputs.item_embeddings is required".into()))?;
    let items = io::read_embeddings(items_path)?;
    let descriptions = match (&config.inputs.description_embeddings, &config.service) {
        (Some(path), _) => io::read_embeddings(path)?,
        (None, Some(service)) => {
            let client = EmbeddingClient::new(service.endpoint.clone(), service.cache.clone());
            embed_descriptions(&client, &sets, space)?
        }
        (None, None) => {
            return Err(Error::InvalidConfig(
                "need inputs.description_embeddings or a [service] section".into(),
            ))
        }
    };
    predict_matrix(&items, &sets, &descriptions, space, config.temperature)
}

#[derive(Debug, Clone)]
pub struct Aggregation {
    pub model: MaceModel,
    pub labels: Vec<AggregatedLabel>,
}

/// Fits MACE (always needed for the ranking) and aggregates with `method`.
pub fn aggregate(matrix: &PredictionMatrix, space: &LabelSpace, method: Method, em: &EmConfig) -> Result<Aggregation> {
    let model = fit_em(matrix, space, em)?;
    let (labels, confidence) = match method {
        Method::Mace => {
            let decoded = decode(&model);
            (decoded.labels, decoded.confidence)
        }
        Method::Majority => majority_vote_with_support(matrix),
    };
    let labels = matrix
        .item_ids()
        .iter()
        .zip(labels.into_iter().zip(confidence))
        .map(|(id, (label, confidence))| AggregatedLabel {
            item_id: id.clone(),
            label,
            confidence,
        })
        .collect();
    Ok(Aggregation { model, labels })
}

/// Macro-F1 and accuracy of an aggregation against gold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateScore {
    pub macro_f1: f64,
    pub accuracy: f64,
}

pub fn score_labels(predicted: &[usize], gold: &GoldLabels, k: usize) -> Result<AggregateScore> {
    let truth = gold.labels();
    let hits = predicted.iter().zip(truth).filter(|(p, g)| p == g).count();
    Ok(AggregateScore {
        macro_f1: macro_f1(predicted, truth, k)?,
        accuracy: hits as f64 / truth.len().max(1) as f64,
    })
}

/// Both aggregators scored against gold, Table-3 style.
#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub mace: AggregateScore,
    pub majority: AggregateScore,
    pub correlations: Option<Correlations>,
}

pub fn evaluate(matrix: &PredictionMatrix, model: &MaceModel, gold: &GoldLabels, space: &LabelSpace) -> Result<(Evaluation, RankingReport)> {
    let gold = gold.aligned_to(matrix)?;
    let report = ranking_report(matrix, model, Some(&gold), space)?;
    let evaluation = Evaluation {
        mace: score_labels(&decode(model).labels, &gold, space.len())?,
        majority: score_labels(&majority_vote(matrix), &gold, space.len())?,
        correlations: report.summary.clone(),
    };
    Ok((evaluation, report))
}

#[derive(Serialize)]
struct Seeds {
    master: u64,
    restarts: Vec<u64>,
    winning_restart: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    generated_at_unix: u64,
    config: &'a ExperimentConfig,
    items: usize,
    annotators: usize,
    log_likelihood: f64,
    iterations: usize,
    converged: bool,
    restart_log_likelihoods: &'a [f64],
    seeds: Seeds,
    mean_non_spam: Vec<(&'a str, f64)>,
    correlations: Option<&'a Correlations>,
    evaluation: Option<&'a Evaluation>,
}

/// What a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub matrix: PredictionMatrix,
    pub aggregation: Aggregation,
    pub ranking: RankingReport,
    pub evaluation: Option<Evaluation>,
    pub files: Vec<PathBuf>,
}

pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let space = config.label_space()?;

    let (matrix, zero_shot_output) = match &config.inputs.predictions {
        Some(path) => (io::read_predictions(path, &space)?, None),
        None => {
            let output = zero_shot(config, &space)?;
            (output.matrix.clone(), Some(output))
        }
    };
    validate_matrix(&matrix, &space).into_result()?;

    let gold = config
        .inputs
        .gold
        .as_ref()
        .map(|path| io::read_gold(path, &space).and_then(|g| g.aligned_to(&matrix)))
        .transpose()?;

    let aggregation = aggregate(&matrix, &space, config.method, &config.em)?;
    let model = &aggregation.model;
    let (evaluation, ranking) = match &gold {
        Some(gold) => {
            let (evaluation, ranking) = evaluate(&matrix, model, gold, &space)?;
            (Some(evaluation), ranking)
        }
        None => (None, ranking_report(&matrix, model, None, &space)?),
    };

    let mut staging = Staging::new(&config.out)?;
    io::write_predictions(staging.path(PREDICTIONS_FILE), &matrix, &space)?;
    if let Some(output) = &zero_shot_output {
        io::write_probabilities(staging.path(PROBABILITIES_FILE), output)?;
    }
    io::write_aggregated(staging.path(AGGREGATED_FILE), &aggregation.labels, &space)?;
    io::write_ranking(staging.path(RANKING_FILE), &ranking.rows)?;
    write_report(staging.path(REPORT_FILE), config, &matrix, model, &ranking, evaluation.as_ref())?;
    let files = staging.commit()?;

    Ok(RunOutput {
        matrix,
        aggregation,
        ranking,
        evaluation,
        files,
    })
}

fn write_report(
    path: PathBuf,
    config: &ExperimentConfig,
    matrix: &PredictionMatrix,
    model: &MaceModel,
    ranking: &RankingReport,
    evaluation: Option<&Evaluation>,
) -> Result<()> {
    let report = Report {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        generated_at_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        config,
        items: matrix.num_items(),
        annotators: matrix.num_annotators(),
        log_likelihood: model.log_likelihood,
        iterations: model.iterations,
        converged: model.converged,
        restart_log_likelihoods: &model.restart_log_likelihoods,
        seeds: Seeds {
            master: config.em.seed,
            restarts: model.restart_seeds.clone(),
            winning_restart: model.restart_index,
        },
        mean_non_spam: matrix
            .annotator_ids()
            .iter()
            .map(String::as_str)
            .zip(model.mean_non_spam.iter().copied())
            .collect(),
        correlations: ranking.summary.as_ref(),
        evaluation,
    };
    write_json(&path, &report)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, e.into()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
