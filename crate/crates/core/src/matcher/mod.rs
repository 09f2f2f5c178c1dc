//! Cosine-ranked retrieval between problem reports and bug reports.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Timestamp;
use crate::embedding::{CacheEntry, DocumentEmbedding, Embedder, EmbeddingCache, EmbeddingError, Pooled};

pub const DEFAULT_K: usize = 3;
/// Heuristic cut-off; observed scores cluster above 0.5.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("vectors differ in dimension ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("query {0:?} has no nouns")]
    NoNouns(String),
    #[error("the index is empty")]
    EmptyIndex,
    #[error("popularity needs a threshold")]
    ThresholdRequired,
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("threshold {0} is outside [-1, 1]")]
    InvalidThreshold(f64),
    #[error("index {path}: {message}")]
    Persistence { path: String, message: String },
    #[error(transparent)]
    Backend(#[from] EmbeddingError),
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64, MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MatchError::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Bugs,
    ProblemReports,
}

/// Something to put in an index.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexItem {
    pub id: String,
    pub text: String,
    pub created_at: Option<Timestamp>,
}

impl IndexItem {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        IndexItem {
            id: id.into(),
            text: text.into(),
            created_at: None,
        }
    }

    pub fn created(mut self, at: Timestamp) -> Self {
        self.created_at = Some(at);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub embedding: DocumentEmbedding,
    pub created_at: Option<Timestamp>,
    key: String,
}

/// Embedded items of one side, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchIndex {
    side: Side,
    backend_identity: String,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    side: Side,
    backend_identity: String,
    ids: Vec<String>,
    keys: Vec<String>,
    #[serde(default)]
    created_at: Vec<Option<Timestamp>>,
}

const MANIFEST: &str = "manifest.json";

impl MatchIndex {
    /// Embeds every item; items without nouns are left out and their ids
    /// returned in input order.
    pub fn build(
        items: &[IndexItem],
        side: Side,
        embedder: &Embedder,
    ) -> Result<(MatchIndex, Vec<String>), MatchError> {
        let mut seen = HashSet::new();
        for item in items {
            if !seen.insert(item.id.as_str()) {
                return Err(MatchError::DuplicateId(item.id.clone()));
            }
        }
        let texts: Vec<&str> = items.iter().map(|i| i.text.as_str()).collect();
        let pooled = embedder.embed_batch(&texts);
        let mut entries = Vec::new();
        let mut skipped = Vec::new();
        for (item, result) in items.iter().zip(pooled) {
            match result? {
                Pooled::Embedded(embedding) => entries.push(IndexEntry {
                    id: item.id.clone(),
                    embedding,
                    created_at: item.created_at.clone(),
                    key: embedder.key(&item.text),
                }),
                Pooled::NoNouns => skipped.push(item.id.clone()),
            }
        }
        Ok((
            MatchIndex {
                side,
                backend_identity: embedder.backend().identity().to_string(),
                entries,
            },
            skipped,
        ))
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn backend_identity(&self) -> &str {
        &self.backend_identity
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IndexEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Writes vectors as cache files plus `manifest.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, tagger_identity: &str, dimension: usize) -> Result<(), MatchError> {
        let dir = dir.as_ref();
        let cache = EmbeddingCache::open(dir)?;
        for e in &self.entries {
            let entry = CacheEntry {
                pooled: Pooled::Embedded(e.embedding.clone()),
                dimension,
                backend_identity: self.backend_identity.clone(),
                tagger_identity: tagger_identity.to_string(),
                text_hash: String::new(),
            };
            if !cache.contains(&e.key) {
                cache.put(&e.key, &entry)?;
            }
        }
        let manifest = Manifest {
            side: self.side,
            backend_identity: self.backend_identity.clone(),
            ids: self.entries.iter().map(|e| e.id.clone()).collect(),
            keys: self.entries.iter().map(|e| e.key.clone()).collect(),
            created_at: self.entries.iter().map(|e| e.created_at.clone()).collect(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        fs::write(dir.join(MANIFEST), json).map_err(|e| persistence(dir, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<MatchIndex, MatchError> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(MANIFEST)).map_err(|e| persistence(dir, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| persistence(dir, e))?;
        if manifest.ids.len() != manifest.keys.len() {
            return Err(persistence(dir, "ids and keys differ in length"));
        }
        let cache = EmbeddingCache::open(dir)?;
        let mut entries = Vec::with_capacity(manifest.ids.len());
        for (i, (id, key)) in manifest.ids.into_iter().zip(manifest.keys).enumerate() {
            let entry = cache
                .get(&key)?
                .ok_or_else(|| persistence(dir, format!("missing cache entry {key}")))?;
            if entry.backend_identity != manifest.backend_identity {
                return Err(persistence(
                    dir,
                    format!("entry {key} comes from {}", entry.backend_identity),
                ));
            }
            let Pooled::Embedded(embedding) = entry.pooled else {
                return Err(persistence(dir, format!("entry {key} has no vector")));
            };
            entries.push(IndexEntry {
                id,
                embedding,
                created_at: manifest.created_at.get(i).cloned().flatten(),
                key,
            });
        }
        Ok(MatchIndex {
            side: manifest.side,
            backend_identity: manifest.backend_identity,
            entries,
        })
    }
}

fn persistence(dir: &Path, message: impl ToString) -> MatchError {
    MatchError::Persistence {
        path: dir.display().to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchQuery {
    pub query_id: String,
    pub text: String,
    pub k: usize,
    pub threshold: Option<f64>,
    /// Only items created at or before this instant are considered.
    pub as_of: Option<Timestamp>,
}

impl MatchQuery {
    pub fn new(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        MatchQuery {
            query_id: query_id.into(),
            text: text.into(),
            k: DEFAULT_K,
            threshold: None,
            as_of: None,
        }
    }

    pub fn k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn threshold(mut self, t: f64) -> Self {
        self.threshold = Some(t);
        self
    }

    pub fn as_of(mut self, at: Timestamp) -> Self {
        self.as_of = Some(at);
        self
    }

    fn validate(&self) -> Result<(), MatchError> {
        validate(self.k, self.threshold)
    }
}

fn validate(k: usize, threshold: Option<f64>) -> Result<(), MatchError> {
    if k == 0 {
        return Err(MatchError::InvalidK);
    }
    if let Some(t) = threshold {
        if !(-1.0..=1.0).contains(&t) {
            return Err(MatchError::InvalidThreshold(t));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub query_id: String,
    pub item_id: String,
    pub score: f64,
    pub rank: usize,
}

impl MatchResult {
    /// One JSONL line with the score at six decimals.
    pub fn to_jsonl(&self) -> String {
        format!(
            "{{\"query_id\":{},\"item_id\":{},\"score\":{:.6},\"rank\":{}}}",
            serde_json::to_string(&self.query_id).expect("string"),
            serde_json::to_string(&self.item_id).expect("string"),
            self.score,
            self.rank
        )
    }
}

/// Per-query outcome of a batch run.
#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutcome {
    Ranked(Vec<MatchResult>),
    NoNouns,
}

fn compare(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Scores every eligible entry, descending by score then ascending by id.
fn score_all<'a>(
    vector: &[f32],
    index: &'a MatchIndex,
    as_of: Option<&Timestamp>,
    exclude: Option<&str>,
) -> Result<Vec<(f64, &'a str)>, MatchError> {
    let mut scored = Vec::with_capacity(index.entries.len());
    for e in &index.entries {
        if exclude == Some(e.id.as_str()) {
            continue;
        }
        if let (Some(limit), Some(created)) = (as_of, &e.created_at) {
            if created.instant() > limit.instant() {
                continue;
            }
        }
        scored.push((cosine_similarity(vector, &e.embedding.vector)?, e.id.as_str()));
    }
    scored.sort_by(compare);
    Ok(scored)
}

fn to_results(query_id: &str, scored: &[(f64, &str)], k: usize, threshold: Option<f64>) -> Vec<MatchResult> {
    scored
        .iter()
        .take_while(|(s, _)| threshold.is_none_or(|t| *s >= t))
        .take(k)
        .enumerate()
        .map(|(i, (score, id))| MatchResult {
            query_id: query_id.to_string(),
            item_id: id.to_string(),
            score: *score,
            rank: i + 1,
        })
        .collect()
}

/// Ranks the index against an already pooled query vector.
pub fn rank_embedding(
    query_id: &str,
    vector: &[f32],
    index: &MatchIndex,
    k: usize,
    threshold: Option<f64>,
    as_of: Option<&Timestamp>,
) -> Result<Vec<MatchResult>, MatchError> {
    validate(k, threshold)?;
    if index.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    let scored = score_all(vector, index, as_of, None)?;
    Ok(to_results(query_id, &scored, k, threshold))
}

fn embed_query(query: &MatchQuery, embedder: &Embedder) -> Result<DocumentEmbedding, MatchError> {
    embedder
        .embed(&query.text)?
        .into_embedding()
        .ok_or_else(|| MatchError::NoNouns(query.query_id.clone()))
}

/// The `k` best index items for the query text.
pub fn top_k(query: &MatchQuery, index: &MatchIndex, embedder: &Embedder) -> Result<Vec<MatchResult>, MatchError> {
    query.validate()?;
    if index.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    let e = embed_query(query, embedder)?;
    rank_embedding(
        &query.query_id,
        &e.vector,
        index,
        query.k,
        query.threshold,
        query.as_of.as_ref(),
    )
}

/// Ranks many queries; noun-free queries come back as `NoNouns`.
pub fn match_batch(
    queries: &[MatchQuery],
    index: &MatchIndex,
    embedder: &Embedder,
) -> Result<Vec<QueryOutcome>, MatchError> {
    if index.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    for q in queries {
        q.validate()?;
    }
    let texts: Vec<&str> = queries.iter().map(|q| q.text.as_str()).collect();
    let pooled = embedder.embed_batch(&texts);
    queries
        .iter()
        .zip(pooled)
        .map(|(q, p)| match p? {
            Pooled::NoNouns => Ok(QueryOutcome::NoNouns),
            Pooled::Embedded(e) => rank_embedding(&q.query_id, &e.vector, index, q.k, q.threshold, q.as_of.as_ref())
                .map(QueryOutcome::Ranked),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseMatch {
    pub results: Vec<MatchResult>,
    /// Items anywhere in the index scoring at or above the threshold.
    pub popularity: Option<usize>,
}

/// Ranks problem reports for a bug summary. With `want_popularity`, also
/// counts every report at or above the threshold, independent of `k`.
pub fn inverse_top_k(
    query: &MatchQuery,
    index: &MatchIndex,
    embedder: &Embedder,
    want_popularity: bool,
) -> Result<InverseMatch, MatchError> {
    query.validate()?;
    if want_popularity && query.threshold.is_none() {
        return Err(MatchError::ThresholdRequired);
    }
    if index.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    let e = embed_query(query, embedder)?;
    let scored = score_all(&e.vector, index, query.as_of.as_ref(), None)?;
    let popularity = if want_popularity {
        let t = query.threshold.expect("checked above");
        Some(scored.iter().filter(|(s, _)| *s >= t).count())
    } else {
        None
    };
    Ok(InverseMatch {
        results: to_results(&query.query_id, &scored, query.k, query.threshold),
        popularity,
    })
}

/// Similar bugs for a bug already in the index, itself excluded.
pub fn bug_to_bug(
    query_id: &str,
    index: &MatchIndex,
    k: usize,
    threshold: Option<f64>,
) -> Result<Vec<MatchResult>, MatchError> {
    validate(k, threshold)?;
    let entry = index
        .get(query_id)
        .ok_or_else(|| MatchError::UnknownItem(query_id.to_string()))?;
    let scored = score_all(&entry.embedding.vector, index, None, Some(query_id))?;
    Ok(to_results(query_id, &scored, k, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedReport {
    pub problem_report_id: String,
    pub best_score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Unmatched {
    /// Reports whose best score is below the threshold, weakest first.
    pub reports: Vec<UnmatchedReport>,
    /// Reports that could not be scored because they contain no nouns.
    pub no_nouns: Vec<String>,
}

/// Problem reports whose rank-1 score falls below `threshold`: candidates
/// for bugs nobody has filed yet.
pub fn unmatched_reports(
    reports: &[IndexItem],
    index: &MatchIndex,
    threshold: f64,
    embedder: &Embedder,
) -> Result<Unmatched, MatchError> {
    validate(1, Some(threshold))?;
    if index.is_empty() {
        return Err(MatchError::EmptyIndex);
    }
    let texts: Vec<&str> = reports.iter().map(|r| r.text.as_str()).collect();
    let pooled = embedder.embed_batch(&texts);
    let mut out = Unmatched::default();
    for (r, p) in reports.iter().zip(pooled) {
        match p? {
            Pooled::NoNouns => out.no_nouns.push(r.id.clone()),
            Pooled::Embedded(e) => {
                let best = score_all(&e.vector, index, None, None)?
                    .first()
                    .map(|(s, _)| *s)
                    .ok_or(MatchError::EmptyIndex)?;
                if best < threshold {
                    out.reports.push(UnmatchedReport {
                        problem_report_id: r.id.clone(),
                        best_score: best,
                    });
                }
            }
        }
    }
    out.reports.sort_by(|a, b| {
        a.best_score
            .total_cmp(&b.best_score)
            .then_with(|| a.problem_report_id.cmp(&b.problem_report_id))
    });
    Ok(out)
}
