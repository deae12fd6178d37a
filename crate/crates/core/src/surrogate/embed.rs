use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SurrogateError;

pub const DEFAULT_DIM: usize = 384;

/// Maps prompt text to a fixed-length vector.
pub trait Embedder: Send + Sync {
    fn spec(&self) -> EmbedderSpec;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, SurrogateError>;
}

/// Serialisable description of an embedder, stored with trained models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hash { dim: usize, seed: u64 },
    Http { endpoint: String, model: String, dim: usize },
}

impl EmbedderSpec {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderSpec::Hash { dim, .. } | EmbedderSpec::Http { dim, .. } => *dim,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EmbedderSpec::Hash { .. } => "hash",
            EmbedderSpec::Http { .. } => "http",
        }
    }

    /// Builds the embedder. HTTP embedders read their key from `api_key`.
    pub fn build(&self, api_key: Option<String>) -> Box<dyn Embedder> {
        match self {
            EmbedderSpec::Hash { dim, seed } => Box::new(HashEmbedder::new(*dim, *seed)),
            EmbedderSpec::Http { endpoint, model, dim } => Box::new(HttpEmbedder::new(
                endpoint.clone(),
                model.clone(),
                *dim,
                api_key,
                Duration::from_secs(60),
            )),
        }
    }
}

pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Lowercased word tokens; underscores stay inside tokens so placeholders
/// hash as single words.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Word unigrams followed by adjacent-word bigrams.
pub fn ngrams(text: &str) -> Vec<String> {
    let toks = tokens(text);
    let bigrams = toks.windows(2).map(|w| format!("{} {}", w[0], w[1]));
    toks.iter().cloned().chain(bigrams).collect()
}

/// Feature-hashed bag of word unigrams and bigrams, L2-normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, seed }
    }

    /// Bucket of one n-gram.
    pub fn bucket(&self, gram: &str) -> usize {
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(gram.as_bytes())
            .finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(bytes) % self.dim as u64) as usize
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, 0)
    }
}

impl Embedder for HashEmbedder {
    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Hash {
            dim: self.dim,
            seed: self.seed,
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SurrogateError> {
        let mut v = vec![0.0; self.dim];
        for gram in ngrams(text) {
            v[self.bucket(&gram)] += 1.0;
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

/// Embeddings from an OpenAI-style endpoint: POST `{model, input: [text]}`
/// and read `data[0].embedding`. Vectors are L2-normalised.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(endpoint: String, model: String, dim: usize, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            model,
            dim,
            api_key,
            agent,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

pub(crate) fn parse_embedding_reply(body: &str, dim: usize) -> Result<Vec<f64>, SurrogateError> {
    let reply: EmbeddingReply =
        serde_json::from_str(body).map_err(|e| SurrogateError::Embedding(format!("malformed reply: {e}")))?;
    let mut v = reply
        .data
        .into_iter()
        .next()
        .map(|d| d.embedding)
        .ok_or_else(|| SurrogateError::Embedding("reply has no data[0].embedding".into()))?;
    if v.len() != dim {
        return Err(SurrogateError::Dimension {
            expected: dim,
            got: v.len(),
        });
    }
    l2_normalize(&mut v);
    Ok(v)
}

impl Embedder for HttpEmbedder {
    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Http {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            dim: self.dim,
        }
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, SurrogateError> {
        let body = serde_json::json!({ "model": self.model, "input": [text] });
        let mut call = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send(body.to_string())
            .map_err(|e| SurrogateError::Embedding(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| SurrogateError::Embedding(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(SurrogateError::Embedding(format!("status {status}: {text}")));
        }
        parse_embedding_reply(&text, self.dim)
    }
}
