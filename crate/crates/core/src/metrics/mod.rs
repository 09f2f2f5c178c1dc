//! Ranking quality measures and the corpus analyses built on top of them.

mod analysis;
mod annotations;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::MatchResult;

pub use analysis::{
    date_gap_analysis, describe, noun_overlap, noun_set, similarity_distribution, write_distribution_csv,
    DateGapReport, DatedPair, DistributionReport, LabeledScore, PairGap, SummaryStats,
};
pub use annotations::{
    fold_latest, resolve_annotations, PairKey, RelevanceAnnotation, Resolution, Verdict, RESOLUTION_CODER,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("neither side has any nouns")]
    BothSidesEmpty,
    #[error("k must be at least 1")]
    InvalidK,
}

/// Relevance of the suggestions for one problem report, rank 1 first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentList {
    pub problem_report_id: String,
    pub judgments: Vec<bool>,
}

impl JudgmentList {
    pub fn new(id: impl Into<String>, judgments: Vec<bool>) -> Self {
        JudgmentList {
            problem_report_id: id.into(),
            judgments,
        }
    }

    pub fn has_hit(&self) -> bool {
        self.judgments.iter().any(|&j| j)
    }

    /// The list cut to its first `k` ranks.
    pub fn prefix(&self, k: usize) -> JudgmentList {
        JudgmentList {
            problem_report_id: self.problem_report_id.clone(),
            judgments: self.judgments.iter().copied().take(k).collect(),
        }
    }
}

/// Sum of precision@i over relevant ranks i, divided by `k`. A report with
/// fewer than `k` relevant suggestions cannot reach 1. Ranks beyond `k` are
/// ignored.
pub fn average_precision(judgments: &[bool], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let mut relevant = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in judgments.iter().take(k).enumerate() {
        if rel {
            relevant += 1;
            sum += relevant as f64 / (i + 1) as f64;
        }
    }
    sum / k as f64
}

/// Mean AveP over the lists not named in `excluded`.
pub fn mean_average_precision(lists: &[JudgmentList], k: usize, excluded: &[String]) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::InvalidK);
    }
    let excluded: HashSet<&str> = excluded.iter().map(String::as_str).collect();
    let kept: Vec<f64> = lists
        .iter()
        .filter(|l| !excluded.contains(l.problem_report_id.as_str()))
        .map(|l| average_precision(&l.judgments, k))
        .collect();
    mean(&kept).ok_or(MetricsError::EmptyEvaluation)
}

/// Share of lists with at least one relevant suggestion. No exclusions.
pub fn hit_ratio(lists: &[JudgmentList]) -> Result<f64, MetricsError> {
    if lists.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    Ok(lists.iter().filter(|l| l.has_hit()).count() as f64 / lists.len() as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Unweighted mean of per-app values.
pub fn macro_average(values: &[f64]) -> Result<f64, MetricsError> {
    mean(values).ok_or(MetricsError::EmptyEvaluation)
}

/// Turns ranked matches and resolved labels into judgment lists, one per
/// query, ranks in order. Suggestions without a resolved label count as not
/// relevant.
pub fn judgment_lists(results: &[MatchResult], resolution: &Resolution) -> Vec<JudgmentList> {
    let mut by_query: BTreeMap<&str, Vec<&MatchResult>> = BTreeMap::new();
    for r in results {
        by_query.entry(r.query_id.as_str()).or_default().push(r);
    }
    by_query
        .into_iter()
        .map(|(q, mut rs)| {
            rs.sort_by_key(|r| r.rank);
            let judgments = rs
                .iter()
                .map(|r| resolution.is_relevant(&r.query_id, &r.item_id))
                .collect();
            JudgmentList::new(q, judgments)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub k: usize,
    pub lists: Vec<JudgmentList>,
    pub map: f64,
    pub hit_ratio: f64,
    pub excluded: Vec<String>,
}

/// MAP (with exclusions) and hit ratio (without) at cut-off `k`.
pub fn evaluate(lists: &[JudgmentList], k: usize, excluded: &[String]) -> Result<EvaluationRun, MetricsError> {
    let cut: Vec<JudgmentList> = lists.iter().map(|l| l.prefix(k)).collect();
    Ok(EvaluationRun {
        k,
        map: mean_average_precision(&cut, k, excluded)?,
        hit_ratio: hit_ratio(&cut)?,
        lists: cut,
        excluded: excluded.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-app values.
    Macro,
    /// All reports pooled into one evaluation.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppMetrics {
    pub map: f64,
    pub hit_ratio: f64,
    pub reports: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement: Option<f64>,
}

/// JSON metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub map: f64,
    pub hit_ratio: f64,
    pub averaging: Averaging,
    pub per_app: BTreeMap<String, AppMetrics>,
    pub excluded: Vec<String>,
    pub agreement: Option<f64>,
}

/// Evaluates each app and combines them. `apps` maps app name to its
/// judgment lists and coder agreement.
pub fn metrics_report(
    apps: &BTreeMap<String, (Vec<JudgmentList>, Option<f64>)>,
    k: usize,
    excluded: &[String],
    averaging: Averaging,
) -> Result<MetricsReport, MetricsError> {
    let mut per_app = BTreeMap::new();
    for (app, (lists, agreement)) in apps {
        let run = evaluate(lists, k, excluded)?;
        per_app.insert(
            app.clone(),
            AppMetrics {
                map: run.map,
                hit_ratio: run.hit_ratio,
                reports: lists.len(),
                agreement: *agreement,
            },
        );
    }
    let (map, hit) = match averaging {
        Averaging::Macro => (
            macro_average(&per_app.values().map(|m| m.map).collect::<Vec<_>>())?,
            macro_average(&per_app.values().map(|m| m.hit_ratio).collect::<Vec<_>>())?,
        ),
        Averaging::Micro => {
            let pooled: Vec<JudgmentList> = apps.values().flat_map(|(l, _)| l.iter().cloned()).collect();
            let run = evaluate(&pooled, k, excluded)?;
            (run.map, run.hit_ratio)
        }
    };
    let agreements: Vec<f64> = per_app.values().filter_map(|m| m.agreement).collect();
    Ok(MetricsReport {
        k,
        map,
        hit_ratio: hit,
        averaging,
        per_app,
        excluded: excluded.to_vec(),
        agreement: mean(&agreements),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn average_precision_examples() {
        assert_eq!(average_precision(&[true, true, true], 3), 1.0);
        assert_eq!(average_precision(&[false, false, false], 3), 0.0);
        // independent arithmetic: (1/1 + 2/3) / 3
        let expected = (1.0 + 2.0 / 3.0) / 3.0;
        assert!((average_precision(&[true, false, true], 3) - expected).abs() < 1e-12);
        assert!((expected - 0.5556).abs() < 1e-4);
        // fewer than k relevant cannot reach one
        assert!(average_precision(&[true], 3) < 1.0);
    }

    #[test]
    fn map_excludes_but_hit_ratio_does_not() {
        let lists = vec![
            JudgmentList::new("a", vec![true, false, true]),
            JudgmentList::new("b", vec![false, false, false]),
        ];
        let excluded = vec!["b".to_string()];
        let map = mean_average_precision(&lists, 3, &excluded).unwrap();
        assert!((map - 0.5556).abs() < 1e-4);
        assert_eq!(hit_ratio(&lists).unwrap(), 0.5);
        assert_eq!(
            mean_average_precision(&lists, 3, &["a".into(), "b".into()]),
            Err(MetricsError::EmptyEvaluation)
        );
        assert_eq!(hit_ratio(&[]), Err(MetricsError::EmptyEvaluation));
    }

    #[test]
    fn table_totals_are_macro_averages() {
        let map = macro_average(&[0.58, 0.40, 0.50, 0.73]).unwrap();
        assert!((map - 0.5525).abs() < 1e-9);
        assert_eq!(format!("{map:.2}"), "0.55");
        let hit = macro_average(&[0.74, 0.51, 0.68, 0.89]).unwrap();
        assert!((hit - 0.705).abs() < 1e-9);
        assert_eq!((hit * 100.0).round() / 100.0, 0.71);
    }

    #[test]
    fn firefox_hit_ratio() {
        let lists: Vec<JudgmentList> = (0..50)
            .map(|i| JudgmentList::new(i.to_string(), vec![i < 37, false, false]))
            .collect();
        assert!((hit_ratio(&lists).unwrap() - 0.74).abs() < 1e-12);
    }

    #[test]
    fn micro_and_macro_differ_on_unbalanced_apps() {
        let mut apps = BTreeMap::new();
        apps.insert("x".to_string(), (vec![JudgmentList::new("1", vec![true])], None));
        apps.insert(
            "y".to_string(),
            (
                vec![
                    JudgmentList::new("2", vec![false]),
                    JudgmentList::new("3", vec![false]),
                    JudgmentList::new("4", vec![false]),
                ],
                Some(0.9),
            ),
        );
        let m = metrics_report(&apps, 1, &[], Averaging::Macro).unwrap();
        assert_eq!(m.hit_ratio, 0.5);
        let u = metrics_report(&apps, 1, &[], Averaging::Micro).unwrap();
        assert_eq!(u.hit_ratio, 0.25);
        assert_eq!(m.agreement, Some(0.9));
        let json = serde_json::to_value(&m).unwrap();
        for key in ["k", "map", "hit_ratio", "per_app", "excluded", "agreement"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    fn lists() -> impl Strategy<Value = Vec<Vec<bool>>> {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), 1..8), 1..10)
    }

    proptest! {
        #[test]
        fn ap_bounds_and_perfect_iff_all_relevant(j in proptest::collection::vec(any::<bool>(), 0..10), k in 1usize..10) {
            let ap = average_precision(&j, k);
            prop_assert!((0.0..=1.0).contains(&ap));
            let perfect = j.len() >= k && j.iter().take(k).all(|&x| x);
            prop_assert_eq!((ap - 1.0).abs() < 1e-12, perfect);
        }

        #[test]
        fn ap_is_monotone(j in proptest::collection::vec(any::<bool>(), 1..10), pos in 0usize..10) {
            let k = j.len();
            let pos = pos % j.len();
            let mut flipped = j.clone();
            flipped[pos] = true;
            prop_assert!(average_precision(&flipped, k) >= average_precision(&j, k) - 1e-12);
        }

        #[test]
        fn hit_ratio_grows_with_k(ls in lists()) {
            let full: Vec<JudgmentList> = ls.iter().enumerate().map(|(i, j)| JudgmentList::new(i.to_string(), j.clone())).collect();
            let mut last = 0.0;
            for k in 1..8 {
                let cut: Vec<JudgmentList> = full.iter().map(|l| l.prefix(k)).collect();
                let h = hit_ratio(&cut).unwrap();
                prop_assert!(h >= last);
                last = h;
            }
        }

        #[test]
        fn map_in_unit_interval_and_deterministic(ls in lists(), k in 1usize..8) {
            let full: Vec<JudgmentList> = ls.iter().enumerate().map(|(i, j)| JudgmentList::new(i.to_string(), j.clone())).collect();
            let a = mean_average_precision(&full, k, &[]).unwrap();
            let b = mean_average_precision(&full, k, &[]).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
