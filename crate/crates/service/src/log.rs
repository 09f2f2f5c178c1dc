use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use feedmatch::corpus::Timestamp;
use feedmatch::metrics::RelevanceAnnotation;
use serde::{Deserialize, Serialize};

/// What the triage team decided to do with a problem report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriageAction {
    MatchedExisting,
    FileNewBug,
    Dismissed,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageDecision {
    pub problem_report_id: String,
    pub action: TriageAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_report_id: Option<String>,
    pub decided_by: String,
    pub decided_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Annotation,
    Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Annotation(RelevanceAnnotation),
    Decision(TriageDecision),
}

/// One line of the log file.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    #[serde(rename = "type")]
    kind: EventKind,
    payload: serde_json::Value,
    server_ts: Timestamp,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}:{line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Append-only JSONL file of annotations and decisions. Each append is
/// flushed to disk before it returns.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    last_ts: Option<DateTime<Utc>>,
}

impl EventLog {
    /// Opens or creates the log and returns it with every stored event in
    /// order. A final line cut short by a crash is dropped from the file.
    pub fn open(path: impl AsRef<Path>) -> Result<(EventLog, Vec<(Event, Timestamp)>), LogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut events = Vec::new();
        let mut good_len = 0u64;
        let mut last_ts = None;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path)?);
            let mut line = String::new();
            let mut n = 0;
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 {
                    break;
                }
                n += 1;
                let complete = line.ends_with('\n');
                if line.trim().is_empty() {
                    good_len += read as u64;
                    continue;
                }
                if !complete {
                    // never acknowledged: the newline goes out with the record
                    log::warn!("{}:{n}: dropping incomplete final record", path.display());
                    break;
                }
                let (event, ts) = parse(&line).map_err(|message| LogError::Corrupt {
                    path: path.display().to_string(),
                    line: n,
                    message,
                })?;
                last_ts = Some(ts.instant());
                events.push((event, ts));
                good_len += read as u64;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        Ok((EventLog { path, file, last_ts }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Server time for the next record: now at millisecond precision, never
    /// earlier than the previous record.
    pub fn next_timestamp(&self) -> Timestamp {
        let now = Utc::now()
            .duration_trunc(TimeDelta::milliseconds(1))
            .expect("millisecond truncation");
        let ts = match self.last_ts {
            Some(last) if last > now => last,
            _ => now,
        };
        Timestamp::from_instant(ts)
    }

    pub fn append(&mut self, event: &Event, server_ts: &Timestamp) -> Result<(), LogError> {
        let (kind, payload) = match event {
            Event::Annotation(a) => (EventKind::Annotation, serde_json::to_value(a)),
            Event::Decision(d) => (EventKind::Decision, serde_json::to_value(d)),
        };
        let record = Record {
            kind,
            payload: payload.map_err(io::Error::from)?,
            server_ts: server_ts.clone(),
        };
        let mut line = serde_json::to_vec(&record).map_err(io::Error::from)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        self.last_ts = Some(server_ts.instant());
        Ok(())
    }
}

fn parse(line: &str) -> Result<(Event, Timestamp), String> {
    let record: Record = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let event = match record.kind {
        EventKind::Annotation => Event::Annotation(serde_json::from_value(record.payload).map_err(|e| e.to_string())?),
        EventKind::Decision => Event::Decision(serde_json::from_value(record.payload).map_err(|e| e.to_string())?),
    };
    Ok((event, record.server_ts))
}
