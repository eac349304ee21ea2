//! Zero-shot classification from label-description embeddings, plus
//! unsupervised ranking and aggregation of the resulting prediction columns
//! with the MACE annotation model.
//!
//! The crate is organised bottom-up:
//!
//! - [`types`]: label spaces, prediction matrices, gold labels, description
//!   sets and embedding sets, with matrix validation.
//! - [`zeroshot`]: cosine similarity, softmax head, matrix prediction and
//!   pattern expansion.
//! - [`mace`]: EM fitting with random restarts, posterior decoding and
//!   ranking by competence.
//! - [`metrics`]: majority voting, Cohen's kappa, macro-F1, Spearman's rho and
//!   the ranking report.
//! - [`simulate`]: sampler for the generative annotation model.
//! - [`io`], [`service`], [`config`], [`pipeline`]: file formats, the
//!   embedding-service client and the end-to-end pipeline used by the CLI.

pub mod config;
pub mod error;
pub mod io;
pub mod mace;
pub mod metrics;
pub mod pipeline;
pub mod service;
pub mod simulate;
pub mod types;
pub mod zeroshot;

pub use error::{Error, Result};
pub use mace::{decode, fit_em, rank_by_theta, Decoded, EmConfig, MaceModel, XiInit};
pub use metrics::{ranking_report, RankingReport};
pub use types::{
    validate_matrix, DescriptionSet, EmbeddingSet, GoldLabels, LabelSpace, PredictionMatrix,
    Validation, Violation,
};
