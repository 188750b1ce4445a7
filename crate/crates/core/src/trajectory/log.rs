//! JSON-Lines trajectory log: one trajectory per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Query, Step, TokenSpan, Trajectory};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io error on trajectory log: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record at line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

/// On-disk record shape: the query fields are flattened.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct LogRecord {
    pub query_id: String,
    pub query_text: String,
    pub gold_answer: String,
    pub plan: String,
    pub steps: Vec<Step>,
    pub final_answer: String,
    pub truncated: bool,
    pub token_spans: Vec<TokenSpan>,
}

impl From<Trajectory> for LogRecord {
    fn from(t: Trajectory) -> Self {
        Self {
            query_id: t.query.id,
            query_text: t.query.text,
            gold_answer: t.query.gold_answer,
            plan: t.anchor_plan,
            steps: t.steps,
            final_answer: t.final_answer,
            truncated: t.truncated,
            token_spans: t.token_spans,
        }
    }
}

impl From<LogRecord> for Trajectory {
    fn from(r: LogRecord) -> Self {
        Self {
            query: Query {
                id: r.query_id,
                text: r.query_text,
                gold_answer: r.gold_answer,
            },
            anchor_plan: r.plan,
            steps: r.steps,
            final_answer: r.final_answer,
            truncated: r.truncated,
            token_spans: r.token_spans,
        }
    }
}

/// Append-free write: serializes `trajectories` to `path`, one JSON
/// record per line, replacing any existing file.
pub fn write_log<P: AsRef<Path>>(trajectories: &[Trajectory], path: P) -> Result<(), LogError> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in trajectories {
        // serde_json cannot fail on these records; map to Parse anyway
        let line = serde_json::to_string(t).map_err(|source| LogError::Parse { line: 0, source })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read every record back, preserving order. Malformed lines fail with
/// their 1-based line number.
pub fn read_log<P: AsRef<Path>>(path: P) -> Result<Vec<Trajectory>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut trajectories = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory =
            serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        trajectories.push(t);
    }
    Ok(trajectories)
}
