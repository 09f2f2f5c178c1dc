use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::textproc::LinguisticToken;

use super::{DocumentEmbedding, EmbeddingBackend, EmbeddingError, Pooled};

/// Cache key for a text embedded by a given backend and tagger.
pub fn cache_key(backend_identity: &str, tagger_identity: &str, text: &str) -> String {
    let mut h = Sha256::new();
    for part in [backend_identity, tagger_identity, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    dimension: usize,
    backend_identity: String,
    tagger_identity: String,
    text_hash: String,
    noun_count: usize,
    #[serde(default)]
    nouns: Vec<LinguisticToken>,
    #[serde(default)]
    subtoken_count: usize,
    #[serde(default)]
    truncated: bool,
}

/// One cached pooling result with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub pooled: Pooled,
    pub dimension: usize,
    pub backend_identity: String,
    pub tagger_identity: String,
    pub text_hash: String,
}

impl CacheEntry {
    pub fn new(pooled: &Pooled, backend: &dyn EmbeddingBackend, tagger_identity: &str, text: &str) -> Self {
        CacheEntry {
            pooled: pooled.clone(),
            dimension: backend.dimension(),
            backend_identity: backend.identity().to_string(),
            tagger_identity: tagger_identity.to_string(),
            text_hash: text_hash(text),
        }
    }
}

/// Directory of `<key>.f32` little-endian vectors with `<key>.json` sidecars.
/// A text without nouns has a sidecar and an empty vector file.
#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    dir: PathBuf,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, EmbeddingError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(EmbeddingCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{key}.f32")),
            self.dir.join(format!("{key}.json")),
        )
    }

    pub fn contains(&self, key: &str) -> bool {
        self.paths(key).1.exists()
    }

    pub fn get(&self, key: &str) -> Result<Option<CacheEntry>, EmbeddingError> {
        let (vec_path, meta_path) = self.paths(key);
        let meta = match fs::read_to_string(&meta_path) {
            Ok(m) => m,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |message: String| EmbeddingError::CacheCorrupt {
            key: key.to_string(),
            message,
        };
        let sidecar: Sidecar = serde_json::from_str(&meta).map_err(|e| corrupt(e.to_string()))?;
        let bytes = fs::read(&vec_path).map_err(|e| corrupt(format!("vector file: {e}")))?;
        let pooled = if sidecar.noun_count == 0 {
            if !bytes.is_empty() {
                return Err(corrupt("vector present for a text without nouns".into()));
            }
            Pooled::NoNouns
        } else {
            if bytes.len() != sidecar.dimension * 4 {
                return Err(corrupt(format!(
                    "{} bytes, expected {}",
                    bytes.len(),
                    sidecar.dimension * 4
                )));
            }
            let vector = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Pooled::Embedded(DocumentEmbedding {
                vector,
                nouns: sidecar.nouns,
                subtoken_count: sidecar.subtoken_count,
                truncated: sidecar.truncated,
            })
        };
        Ok(Some(CacheEntry {
            pooled,
            dimension: sidecar.dimension,
            backend_identity: sidecar.backend_identity,
            tagger_identity: sidecar.tagger_identity,
            text_hash: sidecar.text_hash,
        }))
    }

    /// Writes both files via temporary names and renames, vector first.
    pub fn put(&self, key: &str, entry: &CacheEntry) -> Result<(), EmbeddingError> {
        let (vec_path, meta_path) = self.paths(key);
        let (bytes, sidecar) = match &entry.pooled {
            Pooled::NoNouns => (
                Vec::new(),
                Sidecar {
                    dimension: entry.dimension,
                    backend_identity: entry.backend_identity.clone(),
                    tagger_identity: entry.tagger_identity.clone(),
                    text_hash: entry.text_hash.clone(),
                    noun_count: 0,
                    nouns: vec![],
                    subtoken_count: 0,
                    truncated: false,
                },
            ),
            Pooled::Embedded(e) => {
                if e.vector.len() != entry.dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: entry.dimension,
                        found: e.vector.len(),
                    });
                }
                (
                    e.vector.iter().flat_map(|x| x.to_le_bytes()).collect(),
                    Sidecar {
                        dimension: entry.dimension,
                        backend_identity: entry.backend_identity.clone(),
                        tagger_identity: entry.tagger_identity.clone(),
                        text_hash: entry.text_hash.clone(),
                        noun_count: e.nouns.len(),
                        nouns: e.nouns.clone(),
                        subtoken_count: e.subtoken_count,
                        truncated: e.truncated,
                    },
                )
            }
        };
        write_atomic(&vec_path, &bytes)?;
        let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
        write_atomic(&meta_path, &json)?;
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}
