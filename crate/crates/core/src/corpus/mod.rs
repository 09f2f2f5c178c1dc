//! Reviews, bug reports, and the importers that bring tracker and store
//! exports into one normalized shape.

mod classify;
mod filter;
mod import;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use classify::{
    classify_problem_reports, Classification, FeedbackLabel, HeuristicClassifier, HttpClassifier,
    ProblemReportClassifier,
};
pub use filter::{filter_min_length, word_count, DEFAULT_MIN_WORDS};
pub use import::{
    import_bug_reports, import_mixed_jsonl, import_reviews, write_bugs_jsonl, write_reviews_jsonl, BugFormat,
    ImportOptions, MixedRecords, ReviewFormat, DEFAULT_LABEL_DENYLIST,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("record {record}: {message}")]
    MalformedRecord { record: usize, message: String },
    #[error("record {record}: missing required field {field:?}")]
    MissingRequiredField { record: usize, field: String },
    #[error("classifier unavailable at {endpoint}: {message}")]
    ClassifierUnavailable { endpoint: String, message: String },
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CorpusError {
    pub(crate) fn malformed(record: usize, message: impl fmt::Display) -> Self {
        CorpusError::MalformedRecord {
            record,
            message: message.to_string(),
        }
    }

    pub(crate) fn missing(record: usize, field: &str) -> Self {
        CorpusError::MissingRequiredField {
            record,
            field: field.to_string(),
        }
    }
}

/// A UTC instant that remembers the exact ISO-8601 text it was read from, so
/// normalized files round-trip byte for byte.
#[derive(Debug, Clone)]
pub struct Timestamp {
    instant: DateTime<Utc>,
    text: String,
}

impl Timestamp {
    /// Accepts RFC 3339 (kept verbatim), `YYYY-MM-DD HH:MM:SS` or
    /// `YYYY-MM-DDTHH:MM:SS` without offset (read as UTC), and bare
    /// `YYYY-MM-DD` (UTC midnight). Offset-less inputs are re-rendered in
    /// RFC 3339 form.
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Timestamp {
                instant: dt.with_timezone(&Utc),
                text: s.to_string(),
            });
        }
        for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
            if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
                return Ok(Self::from_instant(Utc.from_utc_datetime(&naive)));
            }
        }
        if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            let naive = date.and_hms_opt(0, 0, 0).expect("midnight exists");
            return Ok(Self::from_instant(Utc.from_utc_datetime(&naive)));
        }
        Err(format!("not an ISO-8601 timestamp: {s:?}"))
    }

    pub fn from_instant(instant: DateTime<Utc>) -> Self {
        Timestamp {
            text: instant.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            instant,
        }
    }

    pub fn from_unix_millis(millis: i64) -> Option<Self> {
        DateTime::from_timestamp_millis(millis).map(Self::from_instant)
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.instant
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.instant == other.instant && self.text == other.text
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.instant
            .cmp(&other.instant)
            .then_with(|| self.text.cmp(&other.text))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl FromStr for Timestamp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReviewSource {
    GooglePlay,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tracker {
    Github,
    Bugzilla,
    Trac,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Classifier,
    Heuristic,
    Manual,
}

/// A user-authored app store review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppReview {
    pub id: String,
    pub app: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    pub created_at: Timestamp,
    pub source: ReviewSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helpful_votes: Option<u32>,
}

/// A review labeled as describing faulty app behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub review: AppReview,
    pub label_source: LabelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl ProblemReport {
    pub fn id(&self) -> &str {
        &self.review.id
    }

    pub fn text(&self) -> &str {
        &self.review.text
    }
}

/// An issue tracker item. Only the summary is used for matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BugReport {
    pub id: String,
    pub app: String,
    pub summary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub status: String,
    pub created_at: Timestamp,
    pub tracker: Tracker,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default)]
    pub labels: Vec<String>,
}

/// Reviews, problem reports and bug reports for one app.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub app: String,
    pub reviews: Vec<AppReview>,
    pub problem_reports: Vec<ProblemReport>,
    pub bug_reports: Vec<BugReport>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate review or bug ids.
    ///
    /// Problem reports whose review is not already listed are added to
    /// `reviews`, so every problem report is backed by a review.
    pub fn new(
        app: impl Into<String>,
        mut reviews: Vec<AppReview>,
        problem_reports: Vec<ProblemReport>,
        bug_reports: Vec<BugReport>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for r in &reviews {
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    kind: "review",
                    id: r.id.clone(),
                });
            }
        }
        let mut missing = Vec::new();
        let mut seen_pr = HashSet::new();
        for p in &problem_reports {
            if !seen_pr.insert(p.id()) {
                return Err(CorpusError::DuplicateId {
                    kind: "problem report",
                    id: p.id().to_string(),
                });
            }
            if !seen.contains(p.id()) {
                missing.push(p.review.clone());
            }
        }
        reviews.extend(missing);

        let mut seen = HashSet::new();
        for b in &bug_reports {
            if !seen.insert(b.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    kind: "bug",
                    id: b.id.clone(),
                });
            }
        }
        Ok(Corpus {
            app: app.into(),
            reviews,
            problem_reports,
            bug_reports,
        })
    }

    pub fn problem_report(&self, id: &str) -> Option<&ProblemReport> {
        self.problem_reports.iter().find(|p| p.id() == id)
    }

    pub fn bug_report(&self, id: &str) -> Option<&BugReport> {
        self.bug_reports.iter().find(|b| b.id == id)
    }

    pub fn review(&self, id: &str) -> Option<&AppReview> {
        self.reviews.iter().find(|r| r.id == id)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn review(id: &str, text: &str) -> AppReview {
        AppReview {
            id: id.to_string(),
            app: "app".to_string(),
            text: text.to_string(),
            rating: None,
            created_at: Timestamp::parse("2020-01-01T00:00:00Z").unwrap(),
            source: ReviewSource::GooglePlay,
            helpful_votes: None,
        }
    }

    pub(crate) fn bug(id: &str, summary: &str) -> BugReport {
        BugReport {
            id: id.to_string(),
            app: "app".to_string(),
            summary: summary.to_string(),
            description: None,
            status: "open".to_string(),
            created_at: Timestamp::parse("2020-01-02T00:00:00Z").unwrap(),
            tracker: Tracker::Github,
            url: None,
            labels: vec![],
        }
    }

    #[test]
    fn timestamps_keep_their_text() {
        for s in [
            "2016-01-17T00:00:00Z",
            "2017-10-09T02:00:00+02:00",
            "2018-07-20T10:11:12.50Z",
        ] {
            let ts = Timestamp::parse(s).unwrap();
            assert_eq!(ts.as_str(), s);
            assert_eq!(serde_json::to_string(&ts).unwrap(), format!("\"{s}\""));
        }
        let ts = Timestamp::parse("2017-10-09T02:00:00+02:00").unwrap();
        assert_eq!(
            ts.instant(),
            Timestamp::parse("2017-10-09T00:00:00Z").unwrap().instant()
        );
    }

    #[test]
    fn offsetless_timestamps_are_canonicalized() {
        assert_eq!(Timestamp::parse("2017-10-09").unwrap().as_str(), "2017-10-09T00:00:00Z");
        assert_eq!(
            Timestamp::parse("2017-10-09 13:45:00").unwrap().as_str(),
            "2017-10-09T13:45:00Z"
        );
        assert!(Timestamp::parse("yesterday").is_err());
        assert!(Timestamp::parse("2017-13-40").is_err());
    }

    #[test]
    fn corpus_rejects_duplicates_and_backfills_reviews() {
        let r = review("r1", "text");
        let p = ProblemReport {
            review: review("r2", "crash"),
            label_source: LabelSource::Manual,
            confidence: None,
        };
        let c = Corpus::new("app", vec![r.clone()], vec![p], vec![bug("1", "a")]).unwrap();
        assert_eq!(c.reviews.len(), 2);
        assert!(c.review("r2").is_some());

        let err = Corpus::new("app", vec![r.clone(), r], vec![], vec![]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { kind: "review", .. }));
        let err = Corpus::new("app", vec![], vec![], vec![bug("1", "a"), bug("1", "b")]).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId { kind: "bug", .. }));
    }
}
