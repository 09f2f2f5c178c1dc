use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use feedmatch::corpus::{
    classify_problem_reports, filter_min_length, import_mixed_jsonl, Corpus, HeuristicClassifier, HttpClassifier,
    ImportOptions, ProblemReportClassifier, Timestamp,
};
use feedmatch::embedding::{EmbeddingCache, EmbeddingError};
use feedmatch::matcher::{rank_embedding, unmatched_reports, IndexItem, MatchIndex, MatchResult, Side};
use feedmatch::metrics::{
    date_gap_analysis, fold_latest, judgment_lists, metrics_report, noun_overlap, resolve_annotations,
    similarity_distribution, Averaging, DateGapReport, DatedPair, DistributionReport, LabeledScore, MetricsError,
    MetricsReport, RelevanceAnnotation, Verdict,
};
use feedmatch::textproc::{PerceptronTagger, TextprocError};
use feedmatch::Embedder;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::log::{Event, EventLog, LogError, TriageAction, TriageDecision};

const CORPUS_FILE: &str = "corpus.json";
const LOG_FILE: &str = "events.jsonl";
const CACHE_DIR: &str = "cache";

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("tagger: {0}")]
    Tagger(#[from] TextprocError),
    #[error("embedding backend: {0}")]
    Backend(#[from] EmbeddingError),
    #[error("event log: {0}")]
    Log(#[from] LogError),
    #[error("stored corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A loaded corpus with both indices and the full ranking of every
/// problem report.
struct Loaded {
    corpus: Corpus,
    bugs: MatchIndex,
    reports: MatchIndex,
    skipped_bugs: Vec<String>,
    skipped_reports: Vec<String>,
    rankings: BTreeMap<String, Vec<MatchResult>>,
    noun_overlap: BTreeMap<String, Option<f64>>,
    report_pos: HashMap<String, usize>,
    bug_pos: HashMap<String, usize>,
}

impl Loaded {
    fn report(&self, id: &str) -> Option<&feedmatch::ProblemReport> {
        self.report_pos.get(id).map(|&i| &self.corpus.problem_reports[i])
    }

    fn bug(&self, id: &str) -> Option<&feedmatch::BugReport> {
        self.bug_pos.get(id).map(|&i| &self.corpus.bug_reports[i])
    }
}

/// State rebuilt from the event log.
struct Store {
    log: EventLog,
    annotations: Vec<RelevanceAnnotation>,
    decisions: BTreeMap<String, TriageDecision>,
}

impl Store {
    fn apply(&mut self, event: Event) {
        match event {
            Event::Annotation(a) => self.annotations.push(a),
            Event::Decision(d) => {
                self.decisions.insert(d.problem_report_id.clone(), d);
            }
        }
    }
}

/// Everything the HTTP layer calls. Methods block; run them off the async
/// executor.
pub struct Service {
    config: ServiceConfig,
    embedder: Embedder,
    corpus: RwLock<Option<Arc<Loaded>>>,
    store: RwLock<Store>,
    loading: Mutex<()>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub app: String,
    pub bugs: usize,
    pub reviews: usize,
    pub problem_reports: usize,
    /// Bug reports left out of the index because their summary has no nouns.
    pub skipped: Vec<String>,
    /// Problem reports left out for the same reason.
    pub skipped_problem_reports: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRequest {
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub problem_report_id: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub as_of: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub item_id: String,
    pub rank: usize,
    pub score: f64,
    pub summary: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResponse {
    pub query_id: String,
    pub k: usize,
    pub threshold: Option<f64>,
    pub results: Vec<Suggestion>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseRequest {
    pub bug_report_id: String,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    /// Defaults to whether a threshold was given.
    #[serde(default)]
    pub popularity: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelatedReport {
    pub item_id: String,
    pub rank: usize,
    pub score: f64,
    pub text: String,
    pub app: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InverseResponse {
    pub bug_report_id: String,
    pub threshold: Option<f64>,
    pub popularity: Option<usize>,
    pub results: Vec<RelatedReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmatchedEntry {
    pub problem_report_id: String,
    pub best_score: f64,
    pub text: String,
    pub app: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmatchedResponse {
    pub threshold: f64,
    pub reports: Vec<UnmatchedEntry>,
    pub no_nouns: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRequest {
    pub problem_report_id: String,
    pub bug_report_id: String,
    pub coder: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub problem_report_id: String,
    pub action: TriageAction,
    #[serde(default)]
    pub bug_report_id: Option<String>,
    #[serde(default)]
    pub decided_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsResponse {
    #[serde(flatten)]
    pub report: MetricsReport,
    pub annotated_reports: usize,
    pub unresolved_pairs: usize,
    /// Scores of judged suggestions within the cut-off, by verdict.
    pub distribution: DistributionReport,
    /// Jaccard index of review and bug-summary nouns per app.
    pub noun_overlap: BTreeMap<String, Option<f64>>,
    /// Review-to-bug date gaps over every pair judged relevant.
    pub date_gaps: DateGapReport,
}

fn classifier(config: &ServiceConfig) -> Box<dyn ProblemReportClassifier> {
    match &config.classifier_endpoint {
        Some(url) => Box::new(HttpClassifier::new(url.clone())),
        None => Box::new(HeuristicClassifier::default()),
    }
}

fn validate_k(k: usize) -> Result<usize, ApiError> {
    if k == 0 {
        return Err(ApiError::new(422, "InvalidK", "k must be at least 1"));
    }
    Ok(k)
}

impl Service {
    /// Loads the tagger, backend, stored corpus and event log.
    pub fn open(config: ServiceConfig) -> Result<Service, StartupError> {
        let tagger = match &config.tagger_model_path {
            Some(p) => PerceptronTagger::load(p)?,
            None => PerceptronTagger::bundled(),
        };
        let backend = config.backend.build()?;
        fs::create_dir_all(&config.data_dir)?;
        let cache = EmbeddingCache::open(config.data_dir.join(CACHE_DIR))?;
        let embedder = Embedder::new(backend, Arc::new(tagger)).with_cache(cache);

        let (log, events) = EventLog::open(config.data_dir.join(LOG_FILE))?;
        let mut store = Store {
            log,
            annotations: Vec::new(),
            decisions: BTreeMap::new(),
        };
        let replayed = events.len();
        for (event, _) in events {
            store.apply(event);
        }

        let service = Service {
            config,
            embedder,
            corpus: RwLock::new(None),
            store: RwLock::new(store),
            loading: Mutex::new(()),
        };
        let stored = service.corpus_path();
        if stored.exists() {
            let text = fs::read_to_string(&stored)?;
            let corpus: Corpus =
                serde_json::from_str(&text).map_err(|e| StartupError::Corpus(format!("{}: {e}", stored.display())))?;
            let loaded = service.index(corpus).map_err(|e| StartupError::Corpus(e.to_string()))?;
            *service.corpus.write().expect("corpus lock") = Some(Arc::new(loaded));
        }
        log::info!(
            "data dir {}: {} events replayed, corpus {}",
            service.config.data_dir.display(),
            replayed,
            if stored.exists() { "restored" } else { "not loaded" }
        );
        Ok(service)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    fn corpus_path(&self) -> PathBuf {
        self.config.data_dir.join(CORPUS_FILE)
    }

    fn loaded(&self) -> Option<Arc<Loaded>> {
        self.corpus.read().expect("corpus lock").clone()
    }

    fn require_loaded(&self) -> Result<Arc<Loaded>, ApiError> {
        self.loaded()
            .ok_or_else(|| ApiError::new(409, "EmptyIndex", "no corpus loaded"))
    }

    fn index(&self, corpus: Corpus) -> Result<Loaded, ApiError> {
        let bug_items: Vec<IndexItem> = corpus
            .bug_reports
            .iter()
            .map(|b| IndexItem::new(&b.id, &b.summary).created(b.created_at.clone()))
            .collect();
        let report_items: Vec<IndexItem> = corpus
            .problem_reports
            .iter()
            .map(|p| IndexItem::new(p.id(), p.text()).created(p.review.created_at.clone()))
            .collect();
        let (bugs, skipped_bugs) = MatchIndex::build(&bug_items, Side::Bugs, &self.embedder)?;
        let (reports, skipped_reports) = MatchIndex::build(&report_items, Side::ProblemReports, &self.embedder)?;

        let mut rankings = BTreeMap::new();
        if !bugs.is_empty() {
            for e in reports.entries() {
                let ranked = rank_embedding(&e.id, &e.embedding.vector, &bugs, bugs.len(), None, None)?;
                rankings.insert(e.id.clone(), ranked);
            }
        }

        let mut apps: BTreeMap<&str, (Vec<&str>, Vec<&str>)> = BTreeMap::new();
        for p in &corpus.problem_reports {
            apps.entry(p.review.app.as_str()).or_default().0.push(p.text());
        }
        for b in &corpus.bug_reports {
            apps.entry(b.app.as_str()).or_default().1.push(b.summary.as_str());
        }
        let tagger = self.embedder.tagger();
        let noun_overlap = apps
            .into_iter()
            .map(|(app, (r, b))| (app.to_string(), noun_overlap(&r, &b, tagger).ok()))
            .collect();

        Ok(Loaded {
            report_pos: corpus
                .problem_reports
                .iter()
                .enumerate()
                .map(|(i, p)| (p.id().to_string(), i))
                .collect(),
            bug_pos: corpus
                .bug_reports
                .iter()
                .enumerate()
                .map(|(i, b)| (b.id.clone(), i))
                .collect(),
            corpus,
            bugs,
            reports,
            skipped_bugs,
            skipped_reports,
            rankings,
            noun_overlap,
        })
    }

    fn summary(loaded: &Loaded) -> CorpusSummary {
        CorpusSummary {
            app: loaded.corpus.app.clone(),
            bugs: loaded.corpus.bug_reports.len(),
            reviews: loaded.corpus.reviews.len(),
            problem_reports: loaded.corpus.problem_reports.len(),
            skipped: loaded.skipped_bugs.clone(),
            skipped_problem_reports: loaded.skipped_reports.clone(),
        }
    }

    /// Replaces the corpus with the records in `body` (JSON lines tagged by
    /// `kind`). Without explicit problem reports, reviews of at least
    /// `min_words` words are classified.
    pub fn load_corpus(&self, body: &[u8], app: Option<String>) -> Result<CorpusSummary, ApiError> {
        let _guard = self.loading.lock().expect("load lock");
        let options = ImportOptions {
            app: app.clone(),
            ..ImportOptions::default()
        };
        let records = import_mixed_jsonl(body, &options)?;
        let problem_reports = if records.problem_reports.is_empty() {
            let candidates = filter_min_length(&records.reviews, self.config.min_words);
            classify_problem_reports(&candidates, classifier(&self.config).as_ref())?
        } else {
            records.problem_reports
        };
        let app = app.unwrap_or_else(|| {
            let names: BTreeSet<&str> = records
                .reviews
                .iter()
                .map(|r| r.app.as_str())
                .chain(problem_reports.iter().map(|p| p.review.app.as_str()))
                .chain(records.bugs.iter().map(|b| b.app.as_str()))
                .collect();
            names.into_iter().collect::<Vec<_>>().join(",")
        });
        let corpus = Corpus::new(app, records.reviews, problem_reports, records.bugs)?;
        let loaded = self.index(corpus)?;

        let path = self.corpus_path();
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_vec(&loaded.corpus).map_err(|e| ApiError::internal(e.to_string()))?;
        fs::write(&tmp, text)
            .and_then(|_| fs::rename(&tmp, &path))
            .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;

        let summary = Self::summary(&loaded);
        *self.corpus.write().expect("corpus lock") = Some(Arc::new(loaded));
        log::info!(
            "corpus {:?}: {} bugs, {} problem reports",
            summary.app,
            summary.bugs,
            summary.problem_reports
        );
        Ok(summary)
    }

    pub fn corpus_summary(&self) -> Result<CorpusSummary, ApiError> {
        Ok(Self::summary(self.require_loaded()?.as_ref()))
    }

    pub fn match_query(&self, req: &MatchRequest) -> Result<MatchResponse, ApiError> {
        let loaded = self.require_loaded()?;
        let k = validate_k(req.k.unwrap_or(self.config.default_k))?;
        let (query_id, vector) = match (&req.text, &req.problem_report_id) {
            (Some(text), None) => {
                let pooled = self
                    .embedder
                    .embed(text)
                    .map_err(feedmatch::matcher::MatchError::from)?;
                let e = pooled
                    .into_embedding()
                    .ok_or_else(|| feedmatch::matcher::MatchError::NoNouns("text".into()))?;
                ("text".to_string(), e.vector)
            }
            (None, Some(id)) => {
                if loaded.report(id).is_none() {
                    return Err(ApiError::unknown("problem report", id));
                }
                let entry = loaded
                    .reports
                    .get(id)
                    .ok_or_else(|| feedmatch::matcher::MatchError::NoNouns(id.clone()))?;
                (id.clone(), entry.embedding.vector.clone())
            }
            _ => return Err(ApiError::bad_request("give exactly one of text and problem_report_id")),
        };
        let ranked = rank_embedding(&query_id, &vector, &loaded.bugs, k, req.threshold, req.as_of.as_ref())?;
        let results = ranked
            .into_iter()
            .map(|r| {
                let bug = loaded.bug(&r.item_id).expect("indexed bugs are in the corpus");
                Suggestion {
                    summary: bug.summary.clone(),
                    status: bug.status.clone(),
                    url: bug.url.clone(),
                    created_at: bug.created_at.clone(),
                    item_id: r.item_id,
                    rank: r.rank,
                    score: r.score,
                }
            })
            .collect();
        Ok(MatchResponse {
            query_id,
            k,
            threshold: req.threshold,
            results,
        })
    }

    pub fn inverse(&self, req: &InverseRequest) -> Result<InverseResponse, ApiError> {
        let want_popularity = req.popularity.unwrap_or(req.threshold.is_some());
        if want_popularity && req.threshold.is_none() {
            return Err(feedmatch::matcher::MatchError::ThresholdRequired.into());
        }
        let loaded = self.require_loaded()?;
        if loaded.bug(&req.bug_report_id).is_none() {
            return Err(ApiError::unknown("bug report", &req.bug_report_id));
        }
        let entry = loaded
            .bugs
            .get(&req.bug_report_id)
            .ok_or_else(|| feedmatch::matcher::MatchError::NoNouns(req.bug_report_id.clone()))?;
        let k = match req.k {
            Some(k) => validate_k(k)?,
            None => loaded.reports.len().max(1),
        };
        let mut all = rank_embedding(
            &req.bug_report_id,
            &entry.embedding.vector,
            &loaded.reports,
            loaded.reports.len().max(1),
            req.threshold,
            None,
        )?;
        let popularity = want_popularity.then_some(all.len());
        all.truncate(k);
        let results = all
            .into_iter()
            .map(|r| {
                let report = loaded.report(&r.item_id).expect("indexed reports are in the corpus");
                RelatedReport {
                    text: report.text().to_string(),
                    app: report.review.app.clone(),
                    created_at: report.review.created_at.clone(),
                    item_id: r.item_id,
                    rank: r.rank,
                    score: r.score,
                }
            })
            .collect();
        Ok(InverseResponse {
            bug_report_id: req.bug_report_id.clone(),
            threshold: req.threshold,
            popularity,
            results,
        })
    }

    pub fn unmatched(&self, threshold: Option<f64>) -> Result<UnmatchedResponse, ApiError> {
        let loaded = self.require_loaded()?;
        let threshold = threshold.unwrap_or(self.config.default_threshold);
        let items: Vec<IndexItem> = loaded
            .corpus
            .problem_reports
            .iter()
            .map(|p| IndexItem::new(p.id(), p.text()))
            .collect();
        let found = unmatched_reports(&items, &loaded.bugs, threshold, &self.embedder)?;
        let reports = found
            .reports
            .into_iter()
            .map(|u| {
                let p = loaded.report(&u.problem_report_id).expect("listed reports exist");
                UnmatchedEntry {
                    text: p.text().to_string(),
                    app: p.review.app.clone(),
                    created_at: p.review.created_at.clone(),
                    problem_report_id: u.problem_report_id,
                    best_score: u.best_score,
                }
            })
            .collect();
        Ok(UnmatchedResponse {
            threshold,
            reports,
            no_nouns: found.no_nouns,
        })
    }

    fn check_pair(&self, report: &str, bug: Option<&str>) -> Result<(), ApiError> {
        let loaded = self.loaded();
        let known_report = loaded.as_ref().is_some_and(|l| l.report(report).is_some());
        if !known_report {
            return Err(ApiError::unknown("problem report", report));
        }
        if let Some(bug) = bug {
            if !loaded.as_ref().is_some_and(|l| l.bug(bug).is_some()) {
                return Err(ApiError::unknown("bug report", bug));
            }
        }
        Ok(())
    }

    pub fn annotate(&self, req: &AnnotationRequest) -> Result<RelevanceAnnotation, ApiError> {
        if req.coder.trim().is_empty() {
            return Err(ApiError::bad_request("coder must not be empty"));
        }
        self.check_pair(&req.problem_report_id, Some(&req.bug_report_id))?;
        let mut store = self.store.write().expect("store lock");
        let ts = store.log.next_timestamp();
        let annotation = RelevanceAnnotation {
            problem_report_id: req.problem_report_id.clone(),
            bug_report_id: req.bug_report_id.clone(),
            coder: req.coder.clone(),
            relevant: req.relevant,
            annotated_at: ts.clone(),
        };
        let event = Event::Annotation(annotation.clone());
        store.log.append(&event, &ts)?;
        store.apply(event);
        Ok(annotation)
    }

    /// Latest label per (problem report, bug report, coder).
    pub fn annotations(&self) -> Vec<RelevanceAnnotation> {
        fold_latest(&self.store.read().expect("store lock").annotations)
    }

    pub fn decide(&self, req: &DecisionRequest) -> Result<TriageDecision, ApiError> {
        if req.action == TriageAction::MatchedExisting && req.bug_report_id.is_none() {
            return Err(
                ApiError::new(422, "MissingRequiredField", "matched-existing needs a bug_report_id")
                    .detail(json!({ "field": "bug_report_id" })),
            );
        }
        self.check_pair(&req.problem_report_id, req.bug_report_id.as_deref())?;
        let mut store = self.store.write().expect("store lock");
        let ts = store.log.next_timestamp();
        let decision = TriageDecision {
            problem_report_id: req.problem_report_id.clone(),
            action: req.action,
            bug_report_id: req.bug_report_id.clone(),
            decided_by: req.decided_by.clone().unwrap_or_else(|| "anonymous".to_string()),
            decided_at: ts.clone(),
        };
        let event = Event::Decision(decision.clone());
        store.log.append(&event, &ts)?;
        store.apply(event);
        Ok(decision)
    }

    /// Latest decision per problem report, ordered by report id.
    pub fn decisions(&self) -> Vec<TriageDecision> {
        self.store
            .read()
            .expect("store lock")
            .decisions
            .values()
            .cloned()
            .collect()
    }

    /// Evaluates the stored rankings of every annotated problem report at
    /// cut-off `k`.
    pub fn metrics(
        &self,
        k: Option<usize>,
        excluded: &[String],
        averaging: Averaging,
    ) -> Result<MetricsResponse, ApiError> {
        let k = k.unwrap_or(self.config.default_k);
        if k == 0 {
            return Err(MetricsError::InvalidK.into());
        }
        let annotations = self.store.read().expect("store lock").annotations.clone();
        let loaded = self.loaded().ok_or(MetricsError::EmptyEvaluation)?;
        let annotations: Vec<RelevanceAnnotation> = annotations
            .into_iter()
            .filter(|a| loaded.rankings.contains_key(&a.problem_report_id))
            .collect();
        if annotations.is_empty() {
            return Err(MetricsError::EmptyEvaluation.into());
        }

        let mut by_app: BTreeMap<String, Vec<RelevanceAnnotation>> = BTreeMap::new();
        for a in &annotations {
            let app = &loaded
                .report(&a.problem_report_id)
                .expect("ranked reports exist")
                .review
                .app;
            by_app.entry(app.clone()).or_default().push(a.clone());
        }
        let mut apps = BTreeMap::new();
        let mut annotated = 0;
        for (app, group) in by_app {
            let resolution = resolve_annotations(&group);
            let reports: BTreeSet<&str> = group.iter().map(|a| a.problem_report_id.as_str()).collect();
            annotated += reports.len();
            let results: Vec<MatchResult> = reports
                .iter()
                .flat_map(|r| loaded.rankings[*r].iter().cloned())
                .collect();
            apps.insert(app, (judgment_lists(&results, &resolution), resolution.agreement));
        }
        let report = metrics_report(&apps, k, excluded, averaging)?;

        let resolution = resolve_annotations(&annotations);
        let annotated_ids: BTreeSet<&str> = annotations.iter().map(|a| a.problem_report_id.as_str()).collect();
        let mut scores = Vec::new();
        for id in &annotated_ids {
            let app = &loaded.report(id).expect("ranked reports exist").review.app;
            for r in loaded.rankings[*id].iter().take(k) {
                let relevant = match resolution.verdict(id, &r.item_id) {
                    Some(Verdict::Relevant) => true,
                    Some(Verdict::Irrelevant) => false,
                    _ => continue,
                };
                scores.push(LabeledScore {
                    app: app.clone(),
                    relevant,
                    score: r.score,
                });
            }
        }
        let dated: Vec<DatedPair> = resolution
            .verdicts
            .iter()
            .filter(|(_, v)| **v == Verdict::Relevant)
            .filter_map(|((r, b), _)| {
                Some(DatedPair {
                    problem_report_id: r.clone(),
                    bug_report_id: b.clone(),
                    review_created_at: loaded.report(r)?.review.created_at.clone(),
                    bug_created_at: loaded.bug(b)?.created_at.clone(),
                })
            })
            .collect();

        Ok(MetricsResponse {
            report,
            annotated_reports: annotated,
            unresolved_pairs: resolution.unresolved().len(),
            distribution: similarity_distribution(&scores),
            noun_overlap: loaded.noun_overlap.clone(),
            date_gaps: date_gap_analysis(&dated),
        })
    }
}
