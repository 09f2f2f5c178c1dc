//! Contextual subtoken embeddings and noun-pooled document vectors.

mod cache;
mod hashing;
#[cfg(feature = "onnx")]
mod onnx;
pub mod pool;
mod wordpiece;

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{
    align_tokenizations, extract_nouns, linguistic_tokenize, pos_tag, LinguisticToken, PosTagger, Subtoken,
    TextprocError,
};

pub use cache::{cache_key, CacheEntry, EmbeddingCache};
pub use hashing::HashingBackend;
#[cfg(feature = "onnx")]
pub use onnx::OnnxBackend;
pub use wordpiece::{Encoding, WordPieceTokenizer};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding backend failed: {0}")]
    Backend(String),
    #[error("model files missing or invalid: {0}")]
    ModelMissing(String),
    #[error("expected {expected}-dimensional vectors, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cache entry {key} is corrupt: {message}")]
    CacheCorrupt { key: String, message: String },
    #[error("unsupported backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Textproc(#[from] TextprocError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One subtoken and its contextual vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbedding {
    pub subtoken: Subtoken,
    pub vector: Vec<f32>,
}

/// Output of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtokenEmbeddings {
    pub tokens: Vec<TokenEmbedding>,
    /// The input did not fit in the model's maximum sequence length and was cut.
    pub truncated: bool,
}

/// Whether a backend may be called from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Shared,
    Exclusive,
}

/// A contextual embedding model. Read-only after construction.
pub trait EmbeddingBackend: Send + Sync {
    /// Stable name for the model and its weights, used in cache keys.
    fn identity(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Maximum subtokens per forward pass, special markers included.
    fn max_sequence_length(&self) -> usize;
    fn concurrency(&self) -> Concurrency {
        Concurrency::Shared
    }
    fn embed_subtokens(&self, text: &str) -> Result<SubtokenEmbeddings, EmbeddingError>;
}

/// A noun-pooled document vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEmbedding {
    pub vector: Vec<f32>,
    /// Nouns whose subtokens went into the mean.
    pub nouns: Vec<LinguisticToken>,
    /// Distinct subtoken positions averaged.
    pub subtoken_count: usize,
    #[serde(default)]
    pub truncated: bool,
}

/// Result of pooling one text. Texts without nouns have no vector and are
/// reported, not ranked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Pooled {
    Embedded(DocumentEmbedding),
    NoNouns,
}

impl Pooled {
    pub fn embedding(&self) -> Option<&DocumentEmbedding> {
        match self {
            Pooled::Embedded(e) => Some(e),
            Pooled::NoNouns => None,
        }
    }

    pub fn into_embedding(self) -> Option<DocumentEmbedding> {
        match self {
            Pooled::Embedded(e) => Some(e),
            Pooled::NoNouns => None,
        }
    }
}

/// Tokenize, tag, keep nouns, align them to the model's subtokens and average
/// the union of aligned subtoken vectors. Each subtoken counts once even if
/// it overlaps several nouns.
pub fn document_embedding(
    text: &str,
    backend: &dyn EmbeddingBackend,
    tagger: &dyn PosTagger,
) -> Result<Pooled, EmbeddingError> {
    let tagged = pos_tag(&linguistic_tokenize(text), tagger);
    let nouns = extract_nouns(&tagged)?;
    if nouns.is_empty() {
        return Ok(Pooled::NoNouns);
    }
    let embedded = backend.embed_subtokens(text)?;
    if embedded.truncated {
        log::warn!(
            "input of {} bytes truncated to {} subtokens by {}",
            text.len(),
            backend.max_sequence_length(),
            backend.identity()
        );
    }
    let subtokens: Vec<Subtoken> = embedded.tokens.iter().map(|t| t.subtoken.clone()).collect();
    let alignment = align_tokenizations(&nouns, &subtokens, text.len())?;

    let mut selected = vec![false; subtokens.len()];
    let mut kept_nouns = Vec::new();
    for (i, noun) in nouns.into_iter().enumerate() {
        let hits = alignment.subtokens_of(i);
        if hits.is_empty() {
            continue;
        }
        for &j in hits {
            selected[j] = true;
        }
        kept_nouns.push(noun);
    }
    let vectors: Vec<&[f32]> = embedded
        .tokens
        .iter()
        .zip(&selected)
        .filter(|(_, &s)| s)
        .map(|(t, _)| t.vector.as_slice())
        .collect();
    if vectors.is_empty() {
        return Ok(Pooled::NoNouns);
    }
    let dim = backend.dimension();
    if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
        return Err(EmbeddingError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(Pooled::Embedded(DocumentEmbedding {
        vector: pool::mean_f32(&vectors),
        nouns: kept_nouns,
        subtoken_count: vectors.len(),
        truncated: embedded.truncated,
    }))
}

/// A backend plus tagger plus optional on-disk cache.
#[derive(Clone)]
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    tagger: Arc<dyn PosTagger>,
    cache: Option<EmbeddingCache>,
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, tagger: Arc<dyn PosTagger>) -> Self {
        Embedder {
            backend,
            tagger,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: EmbeddingCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn backend(&self) -> &dyn EmbeddingBackend {
        self.backend.as_ref()
    }

    pub fn tagger(&self) -> &dyn PosTagger {
        self.tagger.as_ref()
    }

    pub fn cache(&self) -> Option<&EmbeddingCache> {
        self.cache.as_ref()
    }

    pub fn key(&self, text: &str) -> String {
        cache_key(self.backend.identity(), self.tagger.identity(), text)
    }

    pub fn embed(&self, text: &str) -> Result<Pooled, EmbeddingError> {
        let key = self.key(text);
        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key)? {
                return Ok(entry.pooled);
            }
        }
        let pooled = document_embedding(text, self.backend.as_ref(), self.tagger.as_ref())?;
        if let Some(cache) = &self.cache {
            cache.put(
                &key,
                &CacheEntry::new(&pooled, self.backend.as_ref(), self.tagger.identity(), text),
            )?;
        }
        Ok(pooled)
    }

    /// Embeds `texts` in input order, in parallel when the backend allows it.
    /// Per-item failures are returned in place.
    pub fn embed_batch(&self, texts: &[&str]) -> Vec<Result<Pooled, EmbeddingError>> {
        match self.backend.concurrency() {
            Concurrency::Shared => texts.par_iter().map(|t| self.embed(t)).collect(),
            Concurrency::Exclusive => texts.iter().map(|t| self.embed(t)).collect(),
        }
    }
}

/// `backend` section of a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    /// `hashing` (deterministic, for tests) or `onnx` (model directory).
    pub kind: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub max_sequence_length: Option<usize>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: "hashing".to_string(),
            path: None,
            dimension: None,
            max_sequence_length: None,
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn EmbeddingBackend>, EmbeddingError> {
        match self.kind.as_str() {
            "hashing" => Ok(Arc::new(HashingBackend::new(
                self.dimension.unwrap_or(hashing::DEFAULT_DIMENSION),
                self.max_sequence_length.unwrap_or(hashing::DEFAULT_MAX_LEN),
            ))),
            "onnx" => self.build_onnx(),
            other => Err(EmbeddingError::Config(format!("unknown backend kind {other:?}"))),
        }
    }

    #[cfg(feature = "onnx")]
    fn build_onnx(&self) -> Result<Arc<dyn EmbeddingBackend>, EmbeddingError> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| EmbeddingError::Config("onnx backend needs a model path".into()))?;
        let backend = OnnxBackend::load(path, self.max_sequence_length)?;
        if let Some(d) = self.dimension {
            if d != backend.dimension() {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: d,
                    found: backend.dimension(),
                });
            }
        }
        Ok(Arc::new(backend))
    }

    #[cfg(not(feature = "onnx"))]
    fn build_onnx(&self) -> Result<Arc<dyn EmbeddingBackend>, EmbeddingError> {
        Err(EmbeddingError::Config(
            "this build has no onnx support; rebuild with the `onnx` feature".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{LexiconTagger, Span, Upos};

    /// Backend with hand-picked subtokens and vectors.
    struct Fixed {
        tokens: Vec<TokenEmbedding>,
    }

    impl EmbeddingBackend for Fixed {
        fn identity(&self) -> &str {
            "fixed"
        }
        fn dimension(&self) -> usize {
            2
        }
        fn max_sequence_length(&self) -> usize {
            512
        }
        fn embed_subtokens(&self, _text: &str) -> Result<SubtokenEmbeddings, EmbeddingError> {
            Ok(SubtokenEmbeddings {
                tokens: self.tokens.clone(),
                truncated: false,
            })
        }
    }

    fn tok(text: &str, start: usize, end: usize, index: usize, v: [f32; 2]) -> TokenEmbedding {
        TokenEmbedding {
            subtoken: Subtoken::new(text, Span::new(start, end), index),
            vector: v.to_vec(),
        }
    }

    fn tagger() -> LexiconTagger {
        LexiconTagger::with_entries([("broken", Upos::Adj), ("crash", Upos::Verb), ("freeze", Upos::Verb)])
    }

    #[test]
    fn pools_pieces_of_nouns_only() {
        // "auto upload broken": auto, up, ##load, broken
        let backend = Fixed {
            tokens: vec![
                tok("[CLS]", 0, 0, 0, [100.0, 100.0]),
                tok("auto", 0, 4, 1, [1.0, 0.0]),
                tok("up", 5, 7, 2, [0.0, 1.0]),
                tok("##load", 7, 11, 3, [0.0, 3.0]),
                tok("broken", 12, 18, 4, [50.0, 50.0]),
                tok("[SEP]", 0, 0, 5, [100.0, 100.0]),
            ],
        };
        let pooled = document_embedding("auto upload broken", &backend, &tagger()).unwrap();
        let e = pooled.embedding().unwrap();
        assert_eq!(e.subtoken_count, 3);
        let expected = [(1.0 + 0.0 + 0.0) / 3.0, (0.0 + 1.0 + 3.0) / 3.0];
        for (a, b) in e.vector.iter().zip(expected) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
        let nouns: Vec<&str> = e.nouns.iter().map(|n| n.text.as_str()).collect();
        assert_eq!(nouns, ["auto", "upload"]);
    }

    #[test]
    fn shared_subtoken_counted_once() {
        // one subtoken spanning both nouns "ab cd"
        let backend = Fixed {
            tokens: vec![tok("ab cd", 0, 5, 0, [2.0, 0.0]), tok("x", 6, 7, 1, [0.0, 4.0])],
        };
        let pooled = document_embedding("ab cd x", &backend, &LexiconTagger::new()).unwrap();
        let e = pooled.embedding().unwrap();
        assert_eq!(e.subtoken_count, 2);
        assert_eq!(e.vector, vec![1.0, 2.0]);
    }

    #[test]
    fn verbs_only_is_no_nouns() {
        let backend = Fixed { tokens: vec![] };
        let pooled = document_embedding("crash freeze", &backend, &tagger()).unwrap();
        assert_eq!(pooled, Pooled::NoNouns);
    }

    #[test]
    fn wrong_dimension_is_reported() {
        let backend = Fixed {
            tokens: vec![TokenEmbedding {
                subtoken: Subtoken::new("app", Span::new(0, 3), 0),
                vector: vec![1.0, 2.0, 3.0],
            }],
        };
        let err = document_embedding("app", &backend, &LexiconTagger::new()).unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch { expected: 2, found: 3 }
        ));
    }

    #[test]
    fn unknown_backend_kind() {
        let cfg = BackendConfig {
            kind: "magic".into(),
            ..BackendConfig::default()
        };
        assert!(matches!(cfg.build(), Err(EmbeddingError::Config(_))));
    }
}
