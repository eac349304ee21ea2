use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zsmace::config::{ExperimentConfig, Method};
use zsmace::error::{Error, Result};
use zsmace::io;
use zsmace::metrics::ranking_report;
use zsmace::pipeline::{self, Staging};
use zsmace::{simulate, EmConfig, LabelSpace};

#[derive(Parser)]
#[command(name = "zsmace", version, about = "Zero-shot label-description ranking and aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. When a config file is given they
/// override its values.
#[derive(Args, Clone, Default)]
struct Shared {
    /// Master seed; restart r uses seed + r [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Random restarts of EM [default: 10]
    #[arg(long)]
    restarts: Option<usize>,
    /// Iteration cap per restart [default: 100]
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Relative log-likelihood change that stops EM [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// Pseudo-count on both sides of each competence [default: 0.5]
    #[arg(long = "theta-smoothing")]
    theta_smoothing: Option<f64>,
    /// Pseudo-count on each spam-distribution entry [default: 0.1]
    #[arg(long = "xi-smoothing")]
    xi_smoothing: Option<f64>,
    /// Softmax temperature for zero-shot probabilities [default: 1]
    #[arg(long)]
    temperature: Option<f64>,
    /// Label aggregation: mace or majority [default: mace]
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    /// Gold labels CSV (`item_id,label`)
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Shared {
    fn apply_em(&self, em: &mut EmConfig) {
        if let Some(v) = self.seed {
            em.seed = v;
        }
        if let Some(v) = self.restarts {
            em.restarts = v;
        }
        if let Some(v) = self.max_iter {
            em.max_iterations = v;
        }
        if let Some(v) = self.tol {
            em.rel_tolerance = v;
        }
        if let Some(v) = self.theta_smoothing {
            em.theta_smoothing = v;
        }
        if let Some(v) = self.xi_smoothing {
            em.xi_smoothing = v;
        }
    }

    fn apply(&self, config: &mut ExperimentConfig) {
        self.apply_em(&mut config.em);
        if let Some(v) = self.temperature {
            config.temperature = v;
        }
        if let Some(v) = self.method {
            config.method = v;
        }
        if let Some(v) = &self.gold {
            config.inputs.gold = Some(v.clone());
        }
        if let Some(v) = &self.out {
            config.out = v.clone();
        }
    }

    fn em(&self) -> EmConfig {
        let mut em = EmConfig::default();
        self.apply_em(&mut em);
        em
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// A prediction matrix on disk plus its label space.
#[derive(Args, Clone)]
struct MatrixInput {
    /// Prediction matrix CSV (`item_id` then one column per annotator).
    #[arg(long)]
    predictions: PathBuf,
    /// Comma-separated class identifiers, in index order.
    #[arg(long, value_delimiter = ',', required = true)]
    labels: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Zero-shot predictions for every description set in a config.
    Predict {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
    /// Aggregate a prediction matrix into one label per item.
    Aggregate {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        shared: Shared,
    },
    /// Rank annotators (description sets) by fitted competence.
    Rank {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        shared: Shared,
    },
    /// Score rankings and aggregations against gold labels.
    Evaluate {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        shared: Shared,
    },
    /// Sample a synthetic annotation matrix with known gold labels.
    Simulate {
        #[arg(long)]
        items: usize,
        /// Comma-separated class identifiers, in index order.
        #[arg(long, value_delimiter = ',', required = true)]
        labels: Vec<String>,
        /// Per-annotator competence, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        theta: Vec<f64>,
        /// Spam distributions, rows separated by `;`, entries by `,`.
        /// A single row is used for every annotator. Defaults to uniform.
        #[arg(long)]
        xi: Option<String>,
        /// Probability that a cell is left unobserved.
        #[arg(long = "missing-rate", default_value_t = 0.0)]
        missing_rate: f64,
        #[command(flatten)]
        shared: Shared,
    },
    /// Full pipeline: predictions, aggregation, ranking and report.
    Run {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        shared: Shared,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path, shared: &Shared) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(path)?;
    shared.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn read_matrix(input: &MatrixInput) -> Result<(LabelSpace, zsmace::PredictionMatrix)> {
    let space = LabelSpace::new(input.labels.iter().cloned())?;
    let matrix = io::read_predictions(&input.predictions, &space)?;
    zsmace::validate_matrix(&matrix, &space).into_result()?;
    Ok((space, matrix))
}

fn parse_xi(text: Option<&str>, n: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    let Some(text) = text else {
        return Ok(vec![vec![1.0 / k as f64; k]; n]);
    };
    let rows = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidParameters(format!("invalid spam probability `{v}`")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    match rows.len() {
        1 => Ok(vec![rows[0].clone(); n]),
        len if len == n => Ok(rows),
        len => Err(Error::InvalidParameters(format!(
            "{len} spam distributions for {n} annotators"
        ))),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Predict { config, shared } => {
            let config = load_config(&config, &shared)?;
            let space = config.label_space()?;
            let output = pipeline::zero_shot(&config, &space)?;
            let mut staging = Staging::new(&config.out)?;
            io::write_predictions(staging.path(pipeline::PREDICTIONS_FILE), &output.matrix, &space)?;
            io::write_probabilities(staging.path(pipeline::PROBABILITIES_FILE), &output)?;
            for path in staging.commit()? {
                println!("wrote {}", path.display());
            }
        }
        Command::Aggregate { input, shared } => {
            let (space, matrix) = read_matrix(&input)?;
            let aggregation = pipeline::aggregate(&matrix, &space, shared.method.unwrap_or_default(), &shared.em())?;
            let mut staging = Staging::new(shared.out_dir())?;
            io::write_aggregated(staging.path(pipeline::AGGREGATED_FILE), &aggregation.labels, &space)?;
            for path in staging.commit()? {
                println!("wrote {}", path.display());
            }
        }
        Command::Rank { input, shared } => {
            let (space, matrix) = read_matrix(&input)?;
            let model = zsmace::fit_em(&matrix, &space, &shared.em())?;
            let gold = shared.gold.as_ref().map(|p| io::read_gold(p, &space)).transpose()?;
            let report = ranking_report(&matrix, &model, gold.as_ref(), &space)?;
            let mut staging = Staging::new(shared.out_dir())?;
            io::write_ranking(staging.path(pipeline::RANKING_FILE), &report.rows)?;
            for path in staging.commit()? {
                println!("wrote {}", path.display());
            }
            for row in &report.rows {
                println!("{}\t{:.4}", row.annotator_id, row.theta);
            }
        }
        Command::Evaluate { input, shared } => {
            let (space, matrix) = read_matrix(&input)?;
            let gold_path = shared
                .gold
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("evaluate needs --gold".into()))?;
            let gold = io::read_gold(gold_path, &space)?;
            let model = zsmace::fit_em(&matrix, &space, &shared.em())?;
            let (evaluation, report) = pipeline::evaluate(&matrix, &model, &gold, &space)?;

            println!("annotator\ttheta\tkappa_mean\tmacro_f1");
            for row in &report.rows {
                println!(
                    "{}\t{:.4}\t{}\t{:.4}",
                    row.annotator_id,
                    row.theta,
                    row.kappa_mean.map_or("-".to_string(), |k| format!("{k:.4}")),
                    row.macro_f1.unwrap_or(f64::NAN)
                );
            }
            if let Some(c) = &evaluation.correlations {
                println!("rho(theta, f1)\t{:.4}", c.rho_theta_f1.value);
                if let Some(k) = &c.rho_kappa_f1 {
                    println!("rho(kappa, f1)\t{:.4}", k.value);
                }
            }
            println!("mace macro-F1\t{:.4}", evaluation.mace.macro_f1);
            println!("majority macro-F1\t{:.4}", evaluation.majority.macro_f1);

            if let Some(out) = &shared.out {
                let mut staging = Staging::new(out)?;
                pipeline::write_json(&staging.path("evaluation.json"), &evaluation)?;
                io::write_ranking(staging.path(pipeline::RANKING_FILE), &report.rows)?;
                staging.commit()?;
            }
        }
        Command::Simulate {
            items,
            labels,
            theta,
            xi,
            missing_rate,
            shared,
        } => {
            let space = LabelSpace::new(labels)?;
            let xi = parse_xi(xi.as_deref(), theta.len(), space.len())?;
            let seed = shared.seed.unwrap_or(0);
            let bundle = simulate::sample(items, &space, &theta, &xi, missing_rate, seed)?;

            #[derive(serde::Serialize)]
            struct Truth<'a> {
                seed: u64,
                annotator_ids: &'a [String],
                theta_true: &'a [f64],
                xi_true: &'a [Vec<f64>],
                column_accuracy: Vec<f64>,
            }
            let truth = Truth {
                seed,
                annotator_ids: bundle.matrix.annotator_ids(),
                theta_true: &bundle.theta_true,
                xi_true: &bundle.xi_true,
                column_accuracy: (0..theta.len()).map(|j| bundle.column_accuracy(j)).collect(),
            };
            let mut staging = Staging::new(shared.out_dir())?;
            io::write_predictions(staging.path(pipeline::PREDICTIONS_FILE), &bundle.matrix, &space)?;
            io::write_gold(staging.path("gold.csv"), &bundle.gold, &space)?;
            pipeline::write_json(&staging.path("truth.json"), &truth)?;
            for path in staging.commit()? {
                println!("wrote {}", path.display());
            }
        }
        Command::Run { config, shared } => {
            let config = load_config(&config, &shared)?;
            let output = pipeline::run_pipeline(&config)?;
            for path in &output.files {
                println!("wrote {}", path.display());
            }
            if let Some(evaluation) = &output.evaluation {
                println!(
                    "macro-F1: mace {:.4}, majority {:.4}",
                    evaluation.mace.macro_f1, evaluation.majority.macro_f1
                );
            }
        }
    }
    Ok(())
}
