use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde_json::{Map, Value};

use super::{AppReview, BugReport, CorpusError, ProblemReport, ReviewSource, Timestamp, Tracker};

/// Tracker labels that mark feature requests rather than bugs.
pub const DEFAULT_LABEL_DENYLIST: &[&str] = &["enhancement", "feature", "feature-request"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BugFormat {
    GithubJson,
    BugzillaJson,
    TracCsv,
    NormalizedJsonl,
}

impl FromStr for BugFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "github-json" => Ok(BugFormat::GithubJson),
            "bugzilla-json" => Ok(BugFormat::BugzillaJson),
            "trac-csv" => Ok(BugFormat::TracCsv),
            "normalized-jsonl" => Ok(BugFormat::NormalizedJsonl),
            other => Err(format!("unknown bug report format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewFormat {
    GooglePlayCsv,
    NormalizedJsonl,
}

impl FromStr for ReviewFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "google-play-csv" => Ok(ReviewFormat::GooglePlayCsv),
            "normalized-jsonl" => Ok(ReviewFormat::NormalizedJsonl),
            other => Err(format!("unknown review format {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImportOptions {
    /// App name for records whose source format doesn't carry one.
    pub app: Option<String>,
    /// Bug reports carrying any of these labels (case-insensitive) are dropped.
    pub label_denylist: Vec<String>,
}

impl Default for ImportOptions {
    fn default() -> Self {
        ImportOptions {
            app: None,
            label_denylist: DEFAULT_LABEL_DENYLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl ImportOptions {
    pub fn for_app(app: impl Into<String>) -> Self {
        ImportOptions {
            app: Some(app.into()),
            ..Self::default()
        }
    }

    fn denied(&self, labels: &[String]) -> bool {
        labels
            .iter()
            .any(|l| self.label_denylist.iter().any(|d| d.eq_ignore_ascii_case(l.trim())))
    }

    fn app_or(&self, record: usize, found: Option<String>) -> Result<String, CorpusError> {
        found
            .filter(|s| !s.is_empty())
            .or_else(|| self.app.clone())
            .ok_or_else(|| CorpusError::missing(record, "app"))
    }
}

/// Reads bug reports, dropping feature requests. Record numbers in errors
/// are 1-based.
pub fn import_bug_reports(
    reader: impl Read,
    format: BugFormat,
    options: &ImportOptions,
) -> Result<Vec<BugReport>, CorpusError> {
    let bugs = match format {
        BugFormat::GithubJson => json_records(reader, None)?
            .into_iter()
            .enumerate()
            .filter(|(_, v)| v.get("pull_request").is_none())
            .map(|(i, v)| github_bug(i + 1, &v, options))
            .collect::<Result<Vec<_>, _>>()?,
        BugFormat::BugzillaJson => json_records(reader, Some("bugs"))?
            .into_iter()
            .enumerate()
            .map(|(i, v)| bugzilla_bug(i + 1, &v, options))
            .collect::<Result<Vec<_>, _>>()?,
        BugFormat::TracCsv => trac_bugs(reader, options)?,
        BugFormat::NormalizedJsonl => jsonl_lines(reader)?
            .into_iter()
            .map(|(line, v)| normalized::<BugReport>(line, v, BUG_FIELDS))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(bugs.len());
    for (i, bug) in bugs.into_iter().enumerate() {
        if !seen.insert(bug.id.clone()) {
            return Err(CorpusError::malformed(i + 1, format!("duplicate bug id {:?}", bug.id)));
        }
        if !options.denied(&bug.labels) {
            out.push(bug);
        }
    }
    Ok(out)
}

/// Reads app reviews. Star-only reviews with no text are dropped.
pub fn import_reviews(
    reader: impl Read,
    format: ReviewFormat,
    options: &ImportOptions,
) -> Result<Vec<AppReview>, CorpusError> {
    let reviews = match format {
        ReviewFormat::GooglePlayCsv => google_play_reviews(reader, options)?,
        ReviewFormat::NormalizedJsonl => jsonl_lines(reader)?
            .into_iter()
            .map(|(line, v)| normalized::<AppReview>(line, v, REVIEW_FIELDS))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(reviews.len());
    for (i, r) in reviews.into_iter().enumerate() {
        if !seen.insert(r.id.clone()) {
            return Err(CorpusError::malformed(i + 1, format!("duplicate review id {:?}", r.id)));
        }
        if !r.text.trim().is_empty() {
            out.push(r);
        }
    }
    Ok(out)
}

/// Records of all three kinds read from one JSON-lines stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixedRecords {
    pub bugs: Vec<BugReport>,
    pub reviews: Vec<AppReview>,
    pub problem_reports: Vec<ProblemReport>,
}

const BUG_FIELDS: &[&str] = &["id", "app", "summary", "status", "created_at", "tracker"];
const REVIEW_FIELDS: &[&str] = &["id", "app", "text", "created_at", "source"];

/// Reads JSON lines tagged by a `kind` field: `bug` and `review` lines hold
/// the normalized record fields, `problem_report` lines hold `review`,
/// `label_source` and optionally `confidence`. Bugs are filtered by the
/// label denylist. Errors carry 1-based line numbers.
pub fn import_mixed_jsonl(reader: impl Read, options: &ImportOptions) -> Result<MixedRecords, CorpusError> {
    let mut out = MixedRecords::default();
    let mut bug_ids = HashSet::new();
    let mut review_ids = HashSet::new();
    let mut pr_ids = HashSet::new();
    for (line, value) in jsonl_lines(reader)? {
        let kind = value
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| CorpusError::missing(line, "kind"))?
            .to_string();
        match kind.as_str() {
            "bug" => {
                let bug: BugReport = normalized(line, value, BUG_FIELDS)?;
                if !bug_ids.insert(bug.id.clone()) {
                    return Err(CorpusError::malformed(line, format!("duplicate bug id {:?}", bug.id)));
                }
                if !options.denied(&bug.labels) {
                    out.bugs.push(bug);
                }
            }
            "review" => {
                let review: AppReview = normalized(line, value, REVIEW_FIELDS)?;
                if !review_ids.insert(review.id.clone()) {
                    return Err(CorpusError::malformed(
                        line,
                        format!("duplicate review id {:?}", review.id),
                    ));
                }
                out.reviews.push(review);
            }
            "problem_report" => {
                let inner = value
                    .get("review")
                    .cloned()
                    .ok_or_else(|| CorpusError::missing(line, "review"))?;
                let _: AppReview = normalized(line, inner, REVIEW_FIELDS)?;
                let pr: ProblemReport = normalized(line, value, &["review", "label_source"])?;
                if !pr_ids.insert(pr.id().to_string()) {
                    return Err(CorpusError::malformed(
                        line,
                        format!("duplicate problem report id {:?}", pr.id()),
                    ));
                }
                out.problem_reports.push(pr);
            }
            other => return Err(CorpusError::malformed(line, format!("unknown record kind {other:?}"))),
        }
    }
    Ok(out)
}

pub fn write_bugs_jsonl(mut writer: impl Write, bugs: &[BugReport]) -> Result<(), CorpusError> {
    for b in bugs {
        serde_json::to_writer(&mut writer, b).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_reviews_jsonl(mut writer: impl Write, reviews: &[AppReview]) -> Result<(), CorpusError> {
    for r in reviews {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

fn jsonl_lines(reader: impl Read) -> Result<Vec<(usize, Value)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::malformed(i + 1, e))?;
        out.push((i + 1, value));
    }
    Ok(out)
}

/// A JSON array, an object wrapping an array under `key`, or JSON lines.
fn json_records(mut reader: impl Read, key: Option<&str>) -> Result<Vec<Value>, CorpusError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(Value::Object(mut obj)) => match key.and_then(|k| obj.remove(k)) {
            Some(Value::Array(items)) => Ok(items),
            _ => Ok(vec![Value::Object(obj)]),
        },
        Ok(_) => Err(CorpusError::malformed(1, "expected a JSON array of records")),
        Err(_) => Ok(jsonl_lines(text.as_bytes())?.into_iter().map(|(_, v)| v).collect()),
    }
}

fn normalized<T: serde::de::DeserializeOwned>(
    record: usize,
    value: Value,
    required: &[&str],
) -> Result<T, CorpusError> {
    let obj = value
        .as_object()
        .ok_or_else(|| CorpusError::malformed(record, "expected a JSON object"))?;
    for field in required {
        if obj.get(*field).is_none_or(Value::is_null) {
            return Err(CorpusError::missing(record, field));
        }
    }
    serde_json::from_value(value).map_err(|e| CorpusError::malformed(record, e))
}

fn field<'a>(record: usize, obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, CorpusError> {
    match obj.get(name) {
        None | Some(Value::Null) => Err(CorpusError::missing(record, name)),
        Some(v) => Ok(v),
    }
}

fn string_field(record: usize, obj: &Map<String, Value>, name: &str) -> Result<String, CorpusError> {
    match field(record, obj, name)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(CorpusError::malformed(
            record,
            format!("field {name:?} is not a string: {other}"),
        )),
    }
}

fn optional_string(obj: &Map<String, Value>, name: &str) -> Option<String> {
    match obj.get(name) {
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        _ => None,
    }
}

fn timestamp_field(record: usize, obj: &Map<String, Value>, name: &str) -> Result<Timestamp, CorpusError> {
    let raw = string_field(record, obj, name)?;
    Timestamp::parse(&raw).map_err(|e| CorpusError::malformed(record, format!("field {name:?}: {e}")))
}

fn as_object(record: usize, v: &Value) -> Result<&Map<String, Value>, CorpusError> {
    v.as_object()
        .ok_or_else(|| CorpusError::malformed(record, "expected a JSON object"))
}

fn github_bug(record: usize, v: &Value, options: &ImportOptions) -> Result<BugReport, CorpusError> {
    let obj = as_object(record, v)?;
    let number = string_field(record, obj, "number")?;
    let summary = string_field(record, obj, "title")?;
    let status = string_field(record, obj, "state")?;
    let created_at = timestamp_field(record, obj, "created_at")?;
    let labels = match obj.get("labels") {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|l| match l {
                Value::String(s) => Some(s.clone()),
                Value::Object(o) => o.get("name").and_then(Value::as_str).map(str::to_string),
                _ => None,
            })
            .collect(),
        _ => Vec::new(),
    };
    let app = options.app_or(record, repository_name(obj))?;
    Ok(BugReport {
        id: number,
        app,
        summary,
        description: optional_string(obj, "body"),
        status,
        created_at,
        tracker: Tracker::Github,
        url: optional_string(obj, "html_url"),
        labels,
    })
}

fn repository_name(obj: &Map<String, Value>) -> Option<String> {
    let url = obj.get("repository_url")?.as_str()?;
    url.rsplit('/').next().map(str::to_string)
}

fn bugzilla_bug(record: usize, v: &Value, options: &ImportOptions) -> Result<BugReport, CorpusError> {
    let obj = as_object(record, v)?;
    let id = string_field(record, obj, "id")?;
    let summary = string_field(record, obj, "summary")?;
    let status = string_field(record, obj, "status")?;
    let created_at = timestamp_field(record, obj, "creation_time")?;
    let mut labels: Vec<String> = match obj.get("keywords") {
        Some(Value::Array(items)) => items.iter().filter_map(Value::as_str).map(str::to_string).collect(),
        _ => Vec::new(),
    };
    for key in ["type", "severity"] {
        if let Some(s) = optional_string(obj, key) {
            labels.push(s);
        }
    }
    let app = options.app_or(record, optional_string(obj, "product"))?;
    Ok(BugReport {
        id,
        app,
        summary,
        description: optional_string(obj, "description"),
        status,
        created_at,
        tracker: Tracker::Bugzilla,
        url: None,
        labels,
    })
}

struct CsvColumns {
    headers: Vec<String>,
}

impl CsvColumns {
    fn find(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| {
            self.headers
                .iter()
                .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(n))
        })
    }
}

fn cell(row: &csv::StringRecord, col: Option<usize>) -> Option<&str> {
    col.and_then(|c| row.get(c)).map(str::trim).filter(|s| !s.is_empty())
}

fn required_cell<'a>(
    record: usize,
    row: &'a csv::StringRecord,
    col: Option<usize>,
    name: &str,
) -> Result<&'a str, CorpusError> {
    cell(row, col).ok_or_else(|| CorpusError::missing(record, name))
}

fn csv_reader(reader: impl Read) -> Result<(csv::Reader<impl Read>, CsvColumns), CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::malformed(0, e))?
        .iter()
        .map(str::to_string)
        .collect();
    Ok((rdr, CsvColumns { headers }))
}

fn trac_bugs(reader: impl Read, options: &ImportOptions) -> Result<Vec<BugReport>, CorpusError> {
    let (mut rdr, cols) = csv_reader(reader)?;
    let id_col = cols.find(&["id", "ticket"]);
    let summary_col = cols.find(&["summary"]);
    let status_col = cols.find(&["status"]);
    let time_col = cols.find(&["time", "created", "_time"]);
    let type_col = cols.find(&["type"]);
    let keywords_col = cols.find(&["keywords"]);
    let description_col = cols.find(&["description"]);
    let component_col = cols.find(&["component"]);

    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| CorpusError::malformed(record, e))?;
        let id = required_cell(record, &row, id_col, "id")?
            .trim_start_matches('#')
            .to_string();
        let summary = required_cell(record, &row, summary_col, "summary")?.to_string();
        let status = required_cell(record, &row, status_col, "status")?.to_string();
        let raw_time = required_cell(record, &row, time_col, "time")?;
        let created_at = Timestamp::parse(raw_time).map_err(|e| CorpusError::malformed(record, e))?;
        let mut labels = Vec::new();
        if let Some(t) = cell(&row, type_col) {
            labels.push(t.to_string());
        }
        if let Some(k) = cell(&row, keywords_col) {
            labels.extend(
                k.split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(str::to_string),
            );
        }
        let app = options.app_or(
            record,
            cell(&row, component_col)
                .map(str::to_string)
                .filter(|_| options.app.is_none()),
        )?;
        out.push(BugReport {
            id,
            app,
            summary,
            description: cell(&row, description_col).map(str::to_string),
            status,
            created_at,
            tracker: Tracker::Trac,
            url: None,
            labels,
        });
    }
    Ok(out)
}

fn google_play_reviews(reader: impl Read, options: &ImportOptions) -> Result<Vec<AppReview>, CorpusError> {
    let (mut rdr, cols) = csv_reader(reader)?;
    let id_col = cols.find(&["reviewId", "review_id", "id"]);
    let link_col = cols.find(&["Review Link"]);
    let app_col = cols.find(&["Package Name", "appId", "app"]);
    let text_col = cols.find(&["content", "text", "Review Text"]);
    let title_col = cols.find(&["Review Title"]);
    let rating_col = cols.find(&["score", "rating", "Star Rating"]);
    let time_col = cols.find(&["at", "created_at", "Review Submit Date and Time"]);
    let millis_col = cols.find(&["Review Submit Millis Since Epoch"]);
    let votes_col = cols.find(&["thumbsUpCount", "helpful_votes"]);

    if text_col.is_none() {
        return Err(CorpusError::missing(0, "text"));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let record = i + 1;
        let row = row.map_err(|e| CorpusError::malformed(record, e))?;
        let id = match cell(&row, id_col) {
            Some(id) => id.to_string(),
            None => cell(&row, link_col)
                .and_then(review_id_from_link)
                .ok_or_else(|| CorpusError::missing(record, "id"))?,
        };
        let app = options.app_or(record, cell(&row, app_col).map(str::to_string))?;
        let body = cell(&row, text_col).unwrap_or("");
        let text = match cell(&row, title_col) {
            Some(title) if !body.is_empty() => format!("{title}. {body}"),
            Some(title) => title.to_string(),
            None => body.to_string(),
        };
        let created_at = match (cell(&row, time_col), cell(&row, millis_col)) {
            (Some(raw), _) => Timestamp::parse(raw).map_err(|e| CorpusError::malformed(record, e))?,
            (None, Some(ms)) => ms
                .parse::<i64>()
                .ok()
                .and_then(Timestamp::from_unix_millis)
                .ok_or_else(|| CorpusError::malformed(record, format!("bad epoch millis {ms:?}")))?,
            (None, None) => return Err(CorpusError::missing(record, "created_at")),
        };
        let rating = match cell(&row, rating_col) {
            None => None,
            Some(s) => Some(
                s.parse::<u8>()
                    .ok()
                    .filter(|r| (1..=5).contains(r))
                    .ok_or_else(|| CorpusError::malformed(record, format!("bad star rating {s:?}")))?,
            ),
        };
        let helpful_votes = cell(&row, votes_col).and_then(|s| s.parse().ok());
        out.push(AppReview {
            id,
            app,
            text,
            rating,
            created_at,
            source: ReviewSource::GooglePlay,
            helpful_votes,
        });
    }
    Ok(out)
}

fn review_id_from_link(link: &str) -> Option<String> {
    let query = link.split_once('?')?.1;
    query
        .split('&')
        .find_map(|kv| kv.strip_prefix("reviewId="))
        .map(str::to_string)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn github_issues_skip_pull_requests_and_feature_requests() {
        let json = r#"[
          {"number": 1, "title": "Crash on start", "state": "open", "created_at": "2020-01-01T00:00:00Z",
           "labels": [{"name": "bug"}], "html_url": "https://example.org/1"},
          {"number": 2, "title": "Dark mode", "state": "open", "created_at": "2020-01-02T00:00:00Z",
           "labels": [{"name": "Enhancement"}]},
          {"number": 3, "title": "Fix it", "state": "closed", "created_at": "2020-01-03T00:00:00Z",
           "pull_request": {}}
        ]"#;
        let bugs = import_bug_reports(json.as_bytes(), BugFormat::GithubJson, &ImportOptions::for_app("a")).unwrap();
        assert_eq!(bugs.len(), 1);
        assert_eq!(bugs[0].id, "1");
        assert_eq!(bugs[0].url.as_deref(), Some("https://example.org/1"));
        assert_eq!(bugs[0].labels, ["bug"]);
    }

    #[test]
    fn missing_created_at_is_named() {
        let json = r#"[{"number": 1, "title": "x", "state": "open", "created_at": "2020-01-01T00:00:00Z"},
                       {"number": 2, "title": "y", "state": "open"}]"#;
        let err = import_bug_reports(json.as_bytes(), BugFormat::GithubJson, &ImportOptions::for_app("a")).unwrap_err();
        match err {
            CorpusError::MissingRequiredField { record, field } => {
                assert_eq!(record, 2);
                assert_eq!(field, "created_at");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bugzilla_uses_summary_and_type() {
        let json = r#"{"bugs": [
          {"id": 10, "summary": "Tabs freeze", "status": "NEW", "creation_time": "2019-03-01T10:00:00Z",
           "product": "Firefox", "type": "defect", "keywords": ["regression"]},
          {"id": 11, "summary": "Add themes", "status": "NEW", "creation_time": "2019-03-02T10:00:00Z",
           "product": "Firefox", "type": "enhancement"}
        ]}"#;
        let bugs = import_bug_reports(json.as_bytes(), BugFormat::BugzillaJson, &ImportOptions::default()).unwrap();
        assert_eq!(bugs.len(), 1);
        assert_eq!(bugs[0].app, "Firefox");
        assert_eq!(bugs[0].summary, "Tabs freeze");
        assert_eq!(bugs[0].tracker, Tracker::Bugzilla);
    }

    #[test]
    fn trac_csv_rows() {
        let csv = "id,summary,status,type,time,keywords\n\
                   4521,Video stutters on resume,new,defect,2016-05-01 12:00:00,video\n\
                   4522,Support subtitles,new,enhancement,2016-05-02 12:00:00,\n";
        let bugs = import_bug_reports(csv.as_bytes(), BugFormat::TracCsv, &ImportOptions::for_app("vlc")).unwrap();
        assert_eq!(bugs.len(), 1);
        assert_eq!(bugs[0].created_at.as_str(), "2016-05-01T12:00:00Z");
        assert_eq!(bugs[0].labels, ["defect", "video"]);

        let csv = "id,summary,status,type\n1,x,new,defect\n";
        let err = import_bug_reports(csv.as_bytes(), BugFormat::TracCsv, &ImportOptions::for_app("vlc")).unwrap_err();
        assert!(matches!(err, CorpusError::MissingRequiredField { ref field, .. } if field == "time"));
    }

    #[test]
    fn duplicate_ids_are_malformed() {
        let lines = concat!(
            r#"{"id":"1","app":"a","summary":"s","status":"open","created_at":"2020-01-01T00:00:00Z","tracker":"github"}"#,
            "\n",
            r#"{"id":"1","app":"a","summary":"t","status":"open","created_at":"2020-01-01T00:00:00Z","tracker":"github"}"#,
            "\n"
        );
        let err =
            import_bug_reports(lines.as_bytes(), BugFormat::NormalizedJsonl, &ImportOptions::default()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { record: 2, .. }));
    }

    #[test]
    fn google_play_scraper_and_console_layouts() {
        let csv = "reviewId,userName,content,score,thumbsUpCount,at\n\
                   gp:1,Ann,App crashes when uploading photos,1,4,2017-10-09 08:00:00\n\
                   gp:2,Bob,,5,0,2017-10-10 08:00:00\n";
        let reviews = import_reviews(
            csv.as_bytes(),
            ReviewFormat::GooglePlayCsv,
            &ImportOptions::for_app("nextcloud"),
        )
        .unwrap();
        assert_eq!(reviews.len(), 1);
        assert_eq!(reviews[0].rating, Some(1));
        assert_eq!(reviews[0].helpful_votes, Some(4));
        assert_eq!(reviews[0].app, "nextcloud");

        let csv = "Package Name,Star Rating,Review Title,Review Text,Review Submit Millis Since Epoch,Review Link\n\
                   org.mozilla.firefox,2,,Tabs keep reloading,1500000000000,https://play.google.com/x?id=o&reviewId=abc\n";
        let reviews = import_reviews(csv.as_bytes(), ReviewFormat::GooglePlayCsv, &ImportOptions::default()).unwrap();
        assert_eq!(reviews[0].id, "abc");
        assert_eq!(reviews[0].app, "org.mozilla.firefox");
        assert_eq!(reviews[0].created_at.as_str(), "2017-07-14T02:40:00Z");
    }

    #[test]
    fn normalized_reviews_round_trip_bytes() {
        let lines = concat!(
            r#"{"id":"r1","app":"a","text":"Sync fails","rating":2,"created_at":"2017-10-09T02:00:00+02:00","source":"google-play"}"#,
            "\n",
            r#"{"id":"r2","app":"a","text":"Ok","created_at":"2017-10-09T00:00:00.250Z","source":"other","helpful_votes":3}"#,
            "\n"
        );
        let reviews = import_reviews(
            lines.as_bytes(),
            ReviewFormat::NormalizedJsonl,
            &ImportOptions::default(),
        )
        .unwrap();
        let mut out = Vec::new();
        write_reviews_jsonl(&mut out, &reviews).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), lines);
    }

    #[test]
    fn mixed_records() {
        let text = concat!(
            r#"{"kind":"bug","id":"b1","app":"a","summary":"Sync fails","status":"open","created_at":"2018-07-20","tracker":"github"}"#,
            "\n",
            r#"{"kind":"bug","id":"b2","app":"a","summary":"Dark mode","status":"open","created_at":"2018-07-20","tracker":"github","labels":["enhancement"]}"#,
            "\n\n",
            r#"{"kind":"review","id":"r1","app":"a","text":"Nice","created_at":"2017-10-09","source":"google-play"}"#,
            "\n",
            r#"{"kind":"problem_report","review":{"id":"r2","app":"a","text":"Sync fails","created_at":"2017-10-09","source":"google-play"},"label_source":"manual"}"#,
            "\n"
        );
        let m = import_mixed_jsonl(text.as_bytes(), &ImportOptions::default()).unwrap();
        assert_eq!(m.bugs.len(), 1);
        assert_eq!(m.reviews.len(), 1);
        assert_eq!(m.problem_reports[0].id(), "r2");

        let bad = "{\"kind\":\"bug\",\"id\":\"b1\"}\n";
        match import_mixed_jsonl(bad.as_bytes(), &ImportOptions::default()) {
            Err(CorpusError::MissingRequiredField { record: 1, field }) => assert_eq!(field, "app"),
            other => panic!("{other:?}"),
        }
        match import_mixed_jsonl("\nnot json\n".as_bytes(), &ImportOptions::default()) {
            Err(CorpusError::MalformedRecord { record: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
