use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Timestamp;

/// Coder name whose label settles a disagreement.
pub const RESOLUTION_CODER: &str = "resolution";

/// One coder's judgment of one suggested bug for one problem report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceAnnotation {
    pub problem_report_id: String,
    pub bug_report_id: String,
    pub coder: String,
    pub relevant: bool,
    pub annotated_at: Timestamp,
}

/// (problem report id, bug report id)
pub type PairKey = (String, String);

/// Keeps the latest annotation per (report, bug, coder). Equal timestamps
/// go to whichever came later in the input.
pub fn fold_latest(annotations: &[RelevanceAnnotation]) -> Vec<RelevanceAnnotation> {
    let mut latest: BTreeMap<(&str, &str, &str), &RelevanceAnnotation> = BTreeMap::new();
    for a in annotations {
        let key = (a.problem_report_id.as_str(), a.bug_report_id.as_str(), a.coder.as_str());
        match latest.get(&key) {
            Some(prev) if prev.annotated_at.instant() > a.annotated_at.instant() => {}
            _ => {
                latest.insert(key, a);
            }
        }
    }
    latest.into_values().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Relevant,
    Irrelevant,
    /// Coders disagree and nobody has resolved it yet.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Resolution {
    pub verdicts: BTreeMap<PairKey, Verdict>,
    /// Share of multiply coded pairs on which all coders agree; absent when
    /// no pair has two coders.
    pub agreement: Option<f64>,
}

impl Resolution {
    pub fn verdict(&self, report: &str, bug: &str) -> Option<Verdict> {
        self.verdicts.get(&(report.to_string(), bug.to_string())).copied()
    }

    pub fn is_relevant(&self, report: &str, bug: &str) -> bool {
        self.verdict(report, bug) == Some(Verdict::Relevant)
    }

    pub fn unresolved(&self) -> Vec<&PairKey> {
        self.verdicts
            .iter()
            .filter(|(_, v)| **v == Verdict::Unresolved)
            .map(|(k, _)| k)
            .collect()
    }
}

/// Folds to the latest label per coder, then settles each pair: a
/// `resolution` label wins, otherwise unanimous coders decide, otherwise the
/// pair stays unresolved. Agreement is raw percent agreement among the
/// regular coders.
pub fn resolve_annotations(annotations: &[RelevanceAnnotation]) -> Resolution {
    let folded = fold_latest(annotations);
    let mut pairs: BTreeMap<PairKey, (Vec<bool>, Option<bool>)> = BTreeMap::new();
    for a in &folded {
        let entry = pairs
            .entry((a.problem_report_id.clone(), a.bug_report_id.clone()))
            .or_default();
        if a.coder == RESOLUTION_CODER {
            entry.1 = Some(a.relevant);
        } else {
            entry.0.push(a.relevant);
        }
    }
    let mut multi = 0usize;
    let mut agreeing = 0usize;
    let mut verdicts = BTreeMap::new();
    for (key, (labels, resolution)) in pairs {
        let unanimous = labels.windows(2).all(|w| w[0] == w[1]);
        if labels.len() >= 2 {
            multi += 1;
            if unanimous {
                agreeing += 1;
            }
        }
        let label = match (resolution, unanimous, labels.first()) {
            (Some(r), _, _) => Some(r),
            (None, true, Some(&l)) => Some(l),
            _ => None,
        };
        let verdict = match label {
            Some(true) => Verdict::Relevant,
            Some(false) => Verdict::Irrelevant,
            None => Verdict::Unresolved,
        };
        verdicts.insert(key, verdict);
    }
    Resolution {
        verdicts,
        agreement: (multi > 0).then(|| agreeing as f64 / multi as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(p: &str, b: &str, coder: &str, relevant: bool, at: &str) -> RelevanceAnnotation {
        RelevanceAnnotation {
            problem_report_id: p.into(),
            bug_report_id: b.into(),
            coder: coder.into(),
            relevant,
            annotated_at: Timestamp::parse(at).unwrap(),
        }
    }

    const T1: &str = "2021-01-01T00:00:00Z";
    const T2: &str = "2021-01-02T00:00:00Z";

    #[test]
    fn nine_of_ten_agree() {
        let mut anns = Vec::new();
        for i in 0..10 {
            let p = format!("p{i}");
            anns.push(ann(&p, "b", "alice", true, T1));
            anns.push(ann(&p, "b", "bob", i != 0, T1));
        }
        let r = resolve_annotations(&anns);
        assert_eq!(r.agreement, Some(0.9));
        assert_eq!(r.unresolved().len(), 1);
    }

    #[test]
    fn single_coder_has_no_agreement() {
        let r = resolve_annotations(&[ann("p", "b", "alice", true, T1)]);
        assert_eq!(r.agreement, None);
        assert!(r.is_relevant("p", "b"));
    }

    #[test]
    fn resolution_label_wins() {
        let anns = vec![
            ann("p", "b", "alice", true, T1),
            ann("p", "b", "bob", false, T1),
            ann("p", "b", RESOLUTION_CODER, false, T2),
        ];
        let r = resolve_annotations(&anns);
        assert_eq!(r.verdict("p", "b"), Some(Verdict::Irrelevant));
        assert_eq!(r.agreement, Some(0.0));
    }

    #[test]
    fn latest_annotation_per_coder_wins() {
        let anns = vec![
            ann("p", "b", "alice", false, T2),
            ann("p", "b", "alice", true, T1),
            ann("p", "c", "alice", false, T1),
            ann("p", "c", "alice", true, T1),
        ];
        let folded = fold_latest(&anns);
        assert_eq!(folded.len(), 2);
        let r = resolve_annotations(&anns);
        assert_eq!(r.verdict("p", "b"), Some(Verdict::Irrelevant));
        assert_eq!(r.verdict("p", "c"), Some(Verdict::Relevant));
        assert_eq!(r.verdict("p", "zz"), None);
    }
}
