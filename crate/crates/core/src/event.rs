//! Collapse-event records and their line-delimited JSON log.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventModel {
    Grw,
    CcqmJump,
    Split,
    Merge,
    DeferredMerge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub time: f64,
    pub model: EventModel,
    /// Hit particle (GRW only).
    pub particle_index: Option<usize>,
    /// Configuration-space point, flattened in axis order.
    pub center: Vec<f64>,
    /// `α` for GRW hits, `ε` for jumps, `β` for merges.
    pub width_param: f64,
    pub v_before: usize,
    pub v_after: usize,
    pub seed: u64,
    /// Registry identifier of the wavefunction the event acted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavefunction: Option<u64>,
}

impl CollapseEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

pub fn write_jsonl<W: Write>(events: &[CollapseEvent], mut out: W) -> Result<()> {
    for e in events {
        writeln!(out, "{}", e.to_json_line())?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<CollapseEvent>> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e = serde_json::from_str(&line).map_err(|err| Error::Format(format!("event log line {}: {err}", n + 1)))?;
        events.push(e);
    }
    Ok(events)
}
