use std::path::{Path, PathBuf};

use super::{IngestError, RawEvent};
use crate::jsonl::{self, ReadOutcome};

/// Append-only record-per-line store of raw events.
#[derive(Debug, Clone)]
pub struct RawStore {
    path: PathBuf,
}

impl RawStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        RawStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn error(&self, e: std::io::Error) -> IngestError {
        IngestError::Store { path: self.path.display().to_string(), message: e.to_string() }
    }

    /// Appends `events`, one line each, returning the number written.
    pub fn append(&self, events: &[RawEvent]) -> Result<usize, IngestError> {
        jsonl::append_file(&self.path, events).map_err(|e| self.error(e))
    }

    /// Reads records in append order, optionally restricted to one source.
    /// Corrupt lines are skipped and reported with their line number.
    pub fn read(&self, source_id: Option<&str>) -> Result<ReadOutcome<RawEvent>, IngestError> {
        let mut outcome: ReadOutcome<RawEvent> = jsonl::read_file(&self.path).map_err(|e| self.error(e))?;
        if let Some(id) = source_id {
            outcome.records.retain(|e| e.source_id == id);
        }
        Ok(outcome)
    }
}
