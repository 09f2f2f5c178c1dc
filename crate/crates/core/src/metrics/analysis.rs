use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Timestamp;
use crate::textproc::{extract_nouns, linguistic_tokenize, pos_tag, PosTagger};

use super::MetricsError;

/// Lowercased noun types across `texts`.
pub fn noun_set<S: AsRef<str>>(texts: &[S], tagger: &dyn PosTagger) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for text in texts {
        let tagged = pos_tag(&linguistic_tokenize(text.as_ref()), tagger);
        let nouns = extract_nouns(&tagged).expect("every token is tagged");
        out.extend(nouns.into_iter().map(|n| n.text.to_lowercase()));
    }
    out
}

/// Jaccard index of the noun vocabularies of both sides.
pub fn noun_overlap<S: AsRef<str>, T: AsRef<str>>(
    review_texts: &[S],
    bug_summaries: &[T],
    tagger: &dyn PosTagger,
) -> Result<f64, MetricsError> {
    let a = noun_set(review_texts, tagger);
    let b = noun_set(bug_summaries, tagger);
    let union = a.union(&b).count();
    if union == 0 {
        return Err(MetricsError::BothSidesEmpty);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

/// A match score with its app and resolved relevance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub app: String,
    pub relevant: bool,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Five-number summary. Quartiles interpolate linearly between order
/// statistics at position `p * (n - 1)`.
pub fn describe(values: &[f64]) -> Option<SummaryStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(SummaryStats {
        count: v.len(),
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DistributionReport {
    pub relevant: Option<SummaryStats>,
    pub irrelevant: Option<SummaryStats>,
    pub per_app: BTreeMap<String, AppDistribution>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AppDistribution {
    pub relevant: Option<SummaryStats>,
    pub irrelevant: Option<SummaryStats>,
}

fn split(scores: &[&LabeledScore]) -> (Option<SummaryStats>, Option<SummaryStats>) {
    let rel: Vec<f64> = scores.iter().filter(|s| s.relevant).map(|s| s.score).collect();
    let irr: Vec<f64> = scores.iter().filter(|s| !s.relevant).map(|s| s.score).collect();
    (describe(&rel), describe(&irr))
}

/// Score statistics by relevance label, overall and per app.
pub fn similarity_distribution(scores: &[LabeledScore]) -> DistributionReport {
    let all: Vec<&LabeledScore> = scores.iter().collect();
    let (relevant, irrelevant) = split(&all);
    let mut by_app: BTreeMap<&str, Vec<&LabeledScore>> = BTreeMap::new();
    for s in scores {
        by_app.entry(s.app.as_str()).or_default().push(s);
    }
    let per_app = by_app
        .into_iter()
        .map(|(app, group)| {
            let (relevant, irrelevant) = split(&group);
            (app.to_string(), AppDistribution { relevant, irrelevant })
        })
        .collect();
    DistributionReport {
        relevant,
        irrelevant,
        per_app,
    }
}

/// CSV with columns `app,label,score`, one row per score.
pub fn write_distribution_csv(writer: impl Write, scores: &[LabeledScore]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["app", "label", "score"])?;
    for s in scores {
        let label = if s.relevant { "relevant" } else { "irrelevant" };
        w.write_record([s.app.as_str(), label, &format!("{:.6}", s.score)])?;
    }
    w.flush()?;
    Ok(())
}

/// A relevant match with the creation times of both sides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatedPair {
    pub problem_report_id: String,
    pub bug_report_id: String,
    pub review_created_at: Timestamp,
    pub bug_created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGap {
    pub problem_report_id: String,
    pub bug_report_id: String,
    pub review_first: bool,
    /// Whole days from review to bug, rounded down; negative when the bug came first.
    pub gap_days: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DateGapReport {
    pub pairs: usize,
    pub count_review_first: usize,
    /// Mean gap over review-first pairs.
    pub mean_gap_days: Option<f64>,
    pub per_pair: Vec<PairGap>,
}

/// How often, and how long before, users described a bug that was filed later.
pub fn date_gap_analysis(pairs: &[DatedPair]) -> DateGapReport {
    let per_pair: Vec<PairGap> = pairs
        .iter()
        .map(|p| {
            let seconds = (p.bug_created_at.instant() - p.review_created_at.instant()).num_seconds();
            PairGap {
                problem_report_id: p.problem_report_id.clone(),
                bug_report_id: p.bug_report_id.clone(),
                review_first: p.review_created_at.instant() < p.bug_created_at.instant(),
                gap_days: seconds.div_euclid(86_400),
            }
        })
        .collect();
    let gaps: Vec<f64> = per_pair
        .iter()
        .filter(|g| g.review_first)
        .map(|g| g.gap_days as f64)
        .collect();
    DateGapReport {
        pairs: pairs.len(),
        count_review_first: gaps.len(),
        mean_gap_days: super::mean(&gaps),
        per_pair,
    }
}
