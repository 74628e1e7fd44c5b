//! Per-run trace log, written as JSON lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    RoundStart {
        round: usize,
        /// Names in the feedback handed to the agent (empty in round 1).
        feedback: Vec<String>,
        randomized: bool,
    },
    Prompt {
        round: usize,
        system: String,
        user: String,
    },
    Response {
        round: usize,
        attempt: usize,
        text: String,
    },
    Parsed {
        round: usize,
        names: Vec<String>,
        truncated: bool,
        short: bool,
    },
    Substitution {
        round: usize,
        proposed: String,
        replacement: Option<String>,
        reason: String,
    },
    TopUp {
        round: usize,
        names: Vec<String>,
    },
    Selection {
        round: usize,
        names: Vec<String>,
        hits: Vec<String>,
    },
    Warning {
        round: usize,
        message: String,
    },
    Abort {
        round: usize,
        error: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for event in &self.events {
            serde_json::to_writer(&mut w, event)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let events = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { events })
    }
}
