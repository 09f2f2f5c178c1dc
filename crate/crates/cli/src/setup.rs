use std::fmt::Display;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use feedmatch::corpus::{
    classify_problem_reports, filter_min_length, import_bug_reports, import_reviews, BugFormat, CorpusError,
    HeuristicClassifier, HttpClassifier, ImportOptions, LabelSource, ProblemReportClassifier, ReviewFormat,
    DEFAULT_MIN_WORDS,
};
use feedmatch::embedding::{BackendConfig, EmbeddingBackend, EmbeddingCache, EmbeddingError};
use feedmatch::matcher::MatchError;
use feedmatch::textproc::PerceptronTagger;
use feedmatch::{AppReview, BugReport, Embedder, ProblemReport};
use feedmatch_service::ServiceConfig;

pub enum Failure {
    /// Bad arguments or input files.
    Input(String),
    /// Backend or other runtime failure.
    Runtime(String),
}

impl Failure {
    pub fn input(message: impl Display) -> Self {
        Failure::Input(message.to_string())
    }

    pub fn runtime(message: impl Display) -> Self {
        Failure::Runtime(message.to_string())
    }

    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<MatchError> for Failure {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Backend(_) | MatchError::Persistence { .. } => Failure::runtime(e),
            _ => Failure::input(e),
        }
    }
}

impl From<EmbeddingError> for Failure {
    fn from(e: EmbeddingError) -> Self {
        Failure::runtime(e)
    }
}

/// Error in `path`, with the record number as `path:line` when there is one.
pub fn corpus_failure(path: &Path, e: CorpusError) -> Failure {
    let p = path.display();
    match e {
        CorpusError::MalformedRecord { record, message } => Failure::input(format!("{p}:{record}: {message}")),
        CorpusError::MissingRequiredField { record, field } => {
            Failure::input(format!("{p}:{record}: missing required field {field:?}"))
        }
        CorpusError::ClassifierUnavailable { .. } => Failure::runtime(e),
        other => Failure::input(format!("{p}: {other}")),
    }
}

pub fn open(path: &Path) -> Result<File, Failure> {
    File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

/// Output file, or standard output when `path` is `None`.
pub fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Failure::runtime(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
    }
}

pub fn write_json(path: Option<&Path>, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(Failure::runtime)?;
    writeln!(out).and_then(|_| out.flush()).map_err(Failure::runtime)
}

pub fn read_reviews(path: &Path) -> Result<Vec<AppReview>, Failure> {
    import_reviews(open(path)?, ReviewFormat::NormalizedJsonl, &ImportOptions::default())
        .map_err(|e| corpus_failure(path, e))
}

pub fn read_bugs(path: &Path) -> Result<Vec<BugReport>, Failure> {
    import_bug_reports(open(path)?, BugFormat::NormalizedJsonl, &ImportOptions::default())
        .map_err(|e| corpus_failure(path, e))
}

/// Embedding backend and tagger selection shared by the subcommands that embed.
#[derive(Args, Clone, Default)]
pub struct BackendArgs {
    /// Service configuration file; its backend and tagger settings are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Deterministic hashing backend, no model needed.
    #[arg(long)]
    pub test_backend: bool,
    /// Directory with an ONNX export and its vocab.txt.
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    /// Part-of-speech model file; the bundled model when absent.
    #[arg(long)]
    pub tagger_model: Option<PathBuf>,
    /// Directory for cached document embeddings.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl BackendArgs {
    fn service_config(&self) -> Result<Option<ServiceConfig>, Failure> {
        self.config
            .as_ref()
            .map(|p| ServiceConfig::load(p).map_err(Failure::input))
            .transpose()
    }

    pub fn configured(&self) -> bool {
        self.test_backend || self.model_dir.is_some() || self.config.is_some()
    }

    pub fn backend(&self) -> Result<Arc<dyn EmbeddingBackend>, Failure> {
        let config = if self.test_backend {
            BackendConfig::default()
        } else if let Some(dir) = &self.model_dir {
            BackendConfig {
                kind: "onnx".into(),
                path: Some(dir.clone()),
                ..BackendConfig::default()
            }
        } else if let Some(c) = self.service_config()? {
            c.backend
        } else {
            return Err(Failure::input(
                "no embedding backend configured; pass --model-dir, --config or --test-backend",
            ));
        };
        config.build().map_err(|e| match e {
            EmbeddingError::Config(_) => Failure::input(e),
            e => Failure::runtime(e),
        })
    }

    pub fn tagger(&self) -> Result<PerceptronTagger, Failure> {
        let path = match &self.tagger_model {
            Some(p) => Some(p.clone()),
            None => self.service_config()?.and_then(|c| c.tagger_model_path),
        };
        load_tagger(path.as_deref())
    }

    pub fn embedder(&self) -> Result<Embedder, Failure> {
        let backend = self.backend()?;
        let embedder = Embedder::new(backend, Arc::new(self.tagger()?));
        Ok(match &self.cache_dir {
            Some(dir) => embedder.with_cache(EmbeddingCache::open(dir)?),
            None => embedder,
        })
    }
}

pub fn load_tagger(path: Option<&Path>) -> Result<PerceptronTagger, Failure> {
    match path {
        Some(p) => PerceptronTagger::load(p).map_err(Failure::input),
        None => Ok(PerceptronTagger::bundled()),
    }
}

/// How reviews become problem reports.
#[derive(Args, Clone)]
pub struct ClassifyArgs {
    /// Reviews with fewer words are dropped before classification.
    #[arg(long, default_value_t = DEFAULT_MIN_WORDS)]
    pub min_words: usize,
    /// External classifier; the built-in keyword heuristic when absent.
    #[arg(long, conflicts_with = "no_classify")]
    pub classifier_endpoint: Option<String>,
    /// Treat every review that passes the length filter as a problem report.
    #[arg(long)]
    pub no_classify: bool,
}

pub struct Selection {
    pub reviews: usize,
    pub long_enough: usize,
    pub problem_reports: Vec<ProblemReport>,
}

impl ClassifyArgs {
    pub fn select(&self, reviews: &[AppReview]) -> Result<Selection, Failure> {
        if self.min_words == 0 {
            return Err(Failure::input("--min-words must be at least 1"));
        }
        let long = filter_min_length(reviews, self.min_words);
        let problem_reports = if self.no_classify {
            long.iter()
                .map(|r| ProblemReport {
                    review: r.clone(),
                    label_source: LabelSource::Manual,
                    confidence: None,
                })
                .collect()
        } else {
            let classifier: Box<dyn ProblemReportClassifier> = match &self.classifier_endpoint {
                Some(url) => Box::new(HttpClassifier::new(url.clone())),
                None => Box::new(HeuristicClassifier::default()),
            };
            classify_problem_reports(&long, classifier.as_ref()).map_err(Failure::runtime)?
        };
        Ok(Selection {
            reviews: reviews.len(),
            long_enough: long.len(),
            problem_reports,
        })
    }
}
