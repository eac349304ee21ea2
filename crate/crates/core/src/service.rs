//! Client for an external sentence-embedding service.
//!
//! Wire protocol: `POST <endpoint>/embed` with `{"texts": [...]}`, answered by
//! `{"vectors": [[...], ...]}` in request order. Vectors are cached in an
//! embeddings file keyed by the SHA-256 digest of each text, so repeated runs
//! only send texts the cache has not seen.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_embeddings, write_embeddings};
use crate::types::EmbeddingSet;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone)]
pub struct EmbeddingClient {
    endpoint: String,
    cache: Option<PathBuf>,
    agent: ureq::Agent,
}

impl EmbeddingClient {
    pub fn new(endpoint: impl Into<String>, cache: Option<PathBuf>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            cache,
            agent,
        }
    }

    fn load_cache(&self) -> Result<Option<EmbeddingSet>> {
        match &self.cache {
            Some(path) if path.exists() => read_embeddings(path).map(Some),
            _ => Ok(None),
        }
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let url = format!("{}/embed", self.endpoint);
        let service = |e: ureq::Error| Error::EmbeddingService(format!("{url}: {e}"));
        let response: EmbedResponse = self
            .agent
            .post(&url)
            .send_json(EmbedRequest { texts })
            .map_err(service)?
            .body_mut()
            .read_json()
            .map_err(service)?;
        if response.vectors.len() != texts.len() {
            return Err(Error::EmbeddingService(format!(
                "{url}: sent {} texts, received {} vectors",
                texts.len(),
                response.vectors.len()
            )));
        }
        Ok(response.vectors)
    }

    /// Embeds `texts`, returning a set whose ids are the texts themselves in
    /// first-occurrence order.
    pub fn embed(&self, texts: &[&str]) -> Result<EmbeddingSet> {
        let mut unique: Vec<&str> = Vec::with_capacity(texts.len());
        let mut seen = std::collections::HashSet::new();
        for &t in texts {
            if seen.insert(t) {
                unique.push(t);
            }
        }
        if unique.is_empty() {
            return Ok(EmbeddingSet::empty());
        }

        let cached = self.load_cache()?;
        let mut known: HashMap<String, Vec<f64>> = cached
            .as_ref()
            .map(|set| set.iter().map(|(id, v)| (id.to_string(), v.to_vec())).collect())
            .unwrap_or_default();
        let missing: Vec<&str> = unique
            .iter()
            .copied()
            .filter(|t| !known.contains_key(&text_digest(t)))
            .collect();

        if !missing.is_empty() {
            let vectors = self.request(&missing)?;
            let mut ids: Vec<String> = cached.as_ref().map(|c| c.ids().to_vec()).unwrap_or_default();
            let mut all: Vec<Vec<f64>> = cached.as_ref().map(|c| c.vectors().to_vec()).unwrap_or_default();
            for (text, vector) in missing.iter().zip(vectors) {
                let digest = text_digest(text);
                known.insert(digest.clone(), vector.clone());
                ids.push(digest);
                all.push(vector);
            }
            // Validates dimensions against the cached vectors as well.
            let updated = EmbeddingSet::new(ids, all).map_err(|e| Error::EmbeddingService(e.to_string()))?;
            if let Some(path) = &self.cache {
                write_atomically(path, &updated)?;
            }
        }

        let vectors = unique.iter().map(|t| known[&text_digest(t)].clone()).collect();
        EmbeddingSet::new(unique.iter().map(|t| t.to_string()).collect(), vectors)
            .map_err(|e| Error::EmbeddingService(e.to_string()))
    }
}

fn write_atomically(path: &Path, set: &EmbeddingSet) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    write_embeddings(&tmp, set)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One-shot helper around [`EmbeddingClient::embed`].
pub fn fetch_embeddings(endpoint: &str, texts: &[&str], cache: Option<&Path>) -> Result<EmbeddingSet> {
    EmbeddingClient::new(endpoint, cache.map(Path::to_path_buf)).embed(texts)
}
