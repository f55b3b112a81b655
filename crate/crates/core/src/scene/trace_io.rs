//! Newline-delimited JSON scene traces, one record per slot:
//! `{"slot":0,"users":[{"id":0,"pos":[x,y],"gaze":[gx,gy]},...]}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ScenePose, SceneTrace};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct SlotRecord {
    slot: usize,
    users: Vec<ScenePose>,
}

pub fn write_trace_string(trace: &SceneTrace) -> String {
    let mut out = String::new();
    for (slot, users) in trace.slots.iter().enumerate() {
        let rec = SlotRecord { slot, users: users.clone() };
        out.push_str(&serde_json::to_string(&rec).expect("pose records always serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_trace_str(text: &str) -> Result<SceneTrace> {
    let mut slots = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: SlotRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        if rec.slot != slots.len() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("slot index {} out of order, expected {}", rec.slot, slots.len()),
            });
        }
        let users = rec.users.into_iter().map(|p| ScenePose::new(p.id, p.pos, p.gaze)).collect::<Result<Vec<_>>>()?;
        slots.push(users);
    }
    SceneTrace::new(slots)
}

pub fn write_trace(path: &Path, trace: &SceneTrace) -> Result<()> {
    fs::write(path, write_trace_string(trace)).map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<SceneTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_str(&text)
}

/// Reads every `*.jsonl` trace in a directory, sorted by file name.
pub fn read_trace_dir(dir: &Path) -> Result<Vec<SceneTrace>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!("no .jsonl traces in {}", dir.display())));
    }
    paths.iter().map(|p| read_trace(p)).collect()
}
