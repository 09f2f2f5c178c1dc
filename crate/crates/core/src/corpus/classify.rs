use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AppReview, CorpusError, LabelSource, ProblemReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackLabel {
    ProblemReport,
    FeatureRequest,
    Irrelevant,
    #[serde(other)]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: FeedbackLabel,
    #[serde(default)]
    pub confidence: Option<f64>,
}

/// Labels a review as a problem report or something else.
pub trait ProblemReportClassifier {
    fn label_source(&self) -> LabelSource;
    fn classify(&self, review: &AppReview) -> Result<Classification, CorpusError>;
}

/// Runs `classifier` over `reviews` and keeps the problem reports.
pub fn classify_problem_reports(
    reviews: &[AppReview],
    classifier: &dyn ProblemReportClassifier,
) -> Result<Vec<ProblemReport>, CorpusError> {
    let mut out = Vec::new();
    for review in reviews {
        let c = classifier.classify(review)?;
        if c.label == FeedbackLabel::ProblemReport {
            out.push(ProblemReport {
                review: review.clone(),
                label_source: classifier.label_source(),
                confidence: c.confidence,
            });
        }
    }
    Ok(out)
}

const DEFAULT_LEXICON: &[&str] = &[
    "crash", "bug", "freez", "froze", "error", "broken", "fail", "wont", "won't", "stopped", "drain",
];

const NEGATORS: &[&str] = &["no", "not", "never", "without", "zero", "nothing", "none"];

/// Keyword classifier. A word matches a lexicon entry when it starts with
/// it, so `crash` covers `crashes` and `crashing`. A match preceded within
/// two words by a negator (`no bugs`, `never crashes`, `doesn't crash`)
/// does not count.
#[derive(Debug, Clone)]
pub struct HeuristicClassifier {
    lexicon: Vec<String>,
}

impl Default for HeuristicClassifier {
    fn default() -> Self {
        Self::with_lexicon(DEFAULT_LEXICON.iter().copied())
    }
}

impl HeuristicClassifier {
    pub fn with_lexicon<S: AsRef<str>>(terms: impl IntoIterator<Item = S>) -> Self {
        HeuristicClassifier {
            lexicon: terms.into_iter().map(|t| t.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn is_problem(&self, text: &str) -> bool {
        let words: Vec<String> = text
            .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '\u{2019}'))
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase().replace('\u{2019}', "'"))
            .collect();
        words.iter().enumerate().any(|(i, w)| {
            self.lexicon.iter().any(|term| w.starts_with(term.as_str()))
                && !words[i.saturating_sub(2)..i].iter().any(|p| is_negator(p))
        })
    }
}

fn is_negator(word: &str) -> bool {
    NEGATORS.contains(&word)
        || (word.ends_with("n't") && word != "won't")
        || word.ends_with("nt") && ["dont", "doesnt", "didnt", "isnt", "hasnt", "havent"].contains(&word)
}

impl ProblemReportClassifier for HeuristicClassifier {
    fn label_source(&self) -> LabelSource {
        LabelSource::Heuristic
    }

    fn classify(&self, review: &AppReview) -> Result<Classification, CorpusError> {
        let label = if self.is_problem(&review.text) {
            FeedbackLabel::ProblemReport
        } else {
            FeedbackLabel::Other
        };
        Ok(Classification {
            label,
            confidence: None,
        })
    }
}

/// Client for an external classifier service.
///
/// Sends `POST <endpoint>` with `{"text": ...}` and expects
/// `{"label": ..., "confidence": ...}` back.
pub struct HttpClassifier {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpClassifier {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_timeout(endpoint, Duration::from_secs(30))
    }

    pub fn with_timeout(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        HttpClassifier {
            endpoint: endpoint.into(),
            agent,
        }
    }

    fn unavailable(&self, message: impl ToString) -> CorpusError {
        CorpusError::ClassifierUnavailable {
            endpoint: self.endpoint.clone(),
            message: message.to_string(),
        }
    }
}

impl ProblemReportClassifier for HttpClassifier {
    fn label_source(&self) -> LabelSource {
        LabelSource::Classifier
    }

    fn classify(&self, review: &AppReview) -> Result<Classification, CorpusError> {
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(serde_json::json!({ "text": review.text }))
            .map_err(|e| self.unavailable(e))?;
        let status = response.status();
        if !status.is_success() {
            return Err(self.unavailable(format!("HTTP {status}")));
        }
        response
            .body_mut()
            .read_json::<Classification>()
            .map_err(|e| self.unavailable(format!("bad response: {e}")))
    }
}
