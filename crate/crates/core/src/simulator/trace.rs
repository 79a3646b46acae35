use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AsymmError, Result};
use crate::node::{Message, T1Info, T2Snapshot, Task};

/// Static facts about a run, written as the first trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub seed: u64,
    pub num_nodes: usize,
    pub dim: usize,
    /// Status-matrix rows used by the nodes.
    pub rows: usize,
    pub diameter: usize,
    pub neighbors: Vec<Vec<usize>>,
    pub initial_x: Vec<Vec<f64>>,
    pub initial_penalty: f64,
    /// Block partition when running block steps.
    pub blocks: Option<Vec<(usize, usize)>>,
    pub t_min: f64,
    pub t_max: f64,
}

/// One awakening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// Universal event counter, starting at 0.
    pub t: u64,
    /// Simulated clock.
    pub time: f64,
    pub node: usize,
    pub task: Task,
    /// The node's cycle index when it woke up.
    pub cycle: u64,
    /// The node's tolerance when it woke up.
    pub eps: f64,
    pub flag: bool,
    pub t1: Option<T1Info>,
    pub t2: Option<T2Snapshot>,
    pub restarted: bool,
    /// Digest of the node's own multipliers after the event.
    pub dual_digest: u64,
    /// Network infeasibility after the event.
    pub xi: f64,
    /// Largest penalty held by the node after the event.
    pub max_penalty: f64,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    pub header: TraceHeader,
    pub events: Vec<EventRecord>,
}

impl EventTrace {
    /// JSON lines: the header, then one event per line.
    pub fn write_jsonl(&self, w: &mut impl Write) -> Result<()> {
        serde_json::to_writer(&mut *w, &self.header)?;
        w.write_all(b"\n")?;
        for e in &self.events {
            serde_json::to_writer(&mut *w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| AsymmError::contract("empty trace file"))??;
        let header: TraceHeader = serde_json::from_str(&first)?;
        let mut events = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line)?);
        }
        Ok(Self { header, events })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        Ok(bincode::serialize(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(bincode::deserialize(bytes)?)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        Self::read_jsonl(BufReader::new(File::open(path)?))
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
