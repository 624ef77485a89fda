//! JSON Lines exchange log shared by recording and replay.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::{ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub prompt: String,
    pub response: String,
    /// Milliseconds since the Unix epoch.
    pub ts: u64,
    pub provider: String,
}

/// Appends one exchange to the log at `path`, creating it if needed.
pub fn record(path: impl AsRef<Path>, req: &ChatRequest, resp: &ChatResponse) -> Result<ExchangeRecord, LlmError> {
    let entry = ExchangeRecord {
        prompt: req.prompt().to_string(),
        response: resp.content.clone(),
        ts: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        provider: resp.provider.clone(),
    };
    let mut line = serde_json::to_string(&entry).expect("record serializes");
    line.push('\n');
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(line.as_bytes())?;
    Ok(entry)
}

/// Reads every entry of a log. A missing file is an empty log.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<ExchangeRecord>, LlmError> {
    let file = match std::fs::File::open(path.as_ref()) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line).map_err(|e| {
            LlmError::Malformed(format!("{} line {}: {e}", path.as_ref().display(), n + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}
