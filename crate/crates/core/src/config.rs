//! Experiment configuration, loaded from TOML.
//!
//! ```toml
//! labels = ["positive", "negative"]
//! method = "mace"
//! out = "runs/imdb"
//!
//! [inputs]
//! item_embeddings = "items.jsonl"
//! description_embeddings = "descriptions.jsonl"
//! gold = "gold.csv"
//!
//! [[descriptions]]
//! name = "IH"
//! texts = { positive = "positive", negative = "negative" }
//!
//! [[patterns]]
//! id = "movie"
//! template = "The movie is {}."
//!
//! [[variants]]
//! name = "manual"
//! words = { positive = "great", negative = "terrible" }
//!
//! [em]
//! restarts = 10
//! seed = 7
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mace::EmConfig;
use crate::types::{DescriptionSet, LabelSpace};
use crate::zeroshot::{expand_patterns, Pattern, PatternGrid, Variant, DEFAULT_TEMPERATURE};

/// How the per-description columns are combined into one label per item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Mace,
    Majority,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mace => "mace",
            Method::Majority => "majority",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mace" => Ok(Method::Mace),
            "majority" => Ok(Method::Majority),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (expected mace or majority)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// A precomputed prediction matrix; replaces the zero-shot stage.
    pub predictions: Option<PathBuf>,
    pub item_embeddings: Option<PathBuf>,
    /// Keyed `<set name>/<class>`.
    pub description_embeddings: Option<PathBuf>,
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptionSpec {
    pub name: String,
    pub texts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub labels: Vec<String>,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub inputs: Inputs,
    pub service: Option<ServiceConfig>,
    #[serde(default)]
    pub descriptions: Vec<DescriptionSpec>,
    #[serde(default)]
    pub patterns: Vec<Pattern>,
    #[serde(default)]
    pub variants: Vec<Variant>,
    #[serde(default)]
    pub em: EmConfig,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A config that aggregates an existing prediction matrix.
    pub fn for_predictions(labels: Vec<String>, predictions: PathBuf, out: PathBuf) -> Self {
        Self {
            labels,
            method: Method::default(),
            temperature: DEFAULT_TEMPERATURE,
            out,
            inputs: Inputs {
                predictions: Some(predictions),
                ..Inputs::default()
            },
            service: None,
            descriptions: Vec::new(),
            patterns: Vec::new(),
            variants: Vec::new(),
            em: EmConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.out);
        for p in [
            &mut self.inputs.predictions,
            &mut self.inputs.item_embeddings,
            &mut self.inputs.description_embeddings,
            &mut self.inputs.gold,
        ]
        .into_iter()
        .flatten()
        {
            resolve(p);
        }
        if let Some(cache) = self.service.as_mut().and_then(|s| s.cache.as_mut()) {
            resolve(cache);
        }
    }

    pub fn label_space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.labels.iter().cloned())
    }

    /// Explicit description sets followed by the pattern × variant expansion.
    pub fn description_sets(&self, space: &LabelSpace) -> Result<Vec<DescriptionSet>> {
        let mut sets = self
            .descriptions
            .iter()
            .map(|d| DescriptionSet::new(d.name.clone(), d.texts.iter().map(|(c, t)| (c, t.clone())), space))
            .collect::<Result<Vec<_>>>()?;
        let grid = PatternGrid {
            patterns: self.patterns.clone(),
            variants: self.variants.clone(),
        };
        sets.extend(expand_patterns(&grid, space)?);
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = sets.iter().find(|s| !names.insert(s.name().to_string())) {
            return Err(Error::InvalidConfig(format!("duplicate description set `{}`", dup.name())));
        }
        Ok(sets)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.label_space()?;
        self.em.validate()?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }

        let inputs = &self.inputs;
        let mut paths: Vec<&PathBuf> = [
            &inputs.predictions,
            &inputs.item_embeddings,
            &inputs.description_embeddings,
            &inputs.gold,
        ]
        .into_iter()
        .flatten()
        .collect();
        paths.sort();
        if let Some(w) = paths.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("input path `{}` is used twice", w[0].display()));
        }

        if inputs.predictions.is_some() {
            if inputs.item_embeddings.is_some() || inputs.description_embeddings.is_some() {
                return bad("give either a predictions file or embeddings, not both".into());
            }
            return Ok(());
        }
        if inputs.item_embeddings.is_none() {
            return bad("need inputs.predictions or inputs.item_embeddings".into());
        }
        if inputs.description_embeddings.is_none() && self.service.is_none() {
            return bad("need inputs.description_embeddings or a [service] section".into());
        }
        if self.descriptions.is_empty() && (self.patterns.is_empty() || self.variants.is_empty()) {
            return bad("no description sets: give [[descriptions]] or [[patterns]] with [[variants]]".into());
        }
        Ok(())
    }
}
