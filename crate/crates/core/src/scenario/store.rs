//! JSONL scenario store: one `v1` scenario object per line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AtomScenario, ScenarioId};
use crate::error::{Error, Result};

pub const STORE_VERSION: &str = "v1";

/// On-disk line format.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub version: String,
    #[serde(flatten)]
    pub scenario: AtomScenario,
}

fn encode_line(s: &AtomScenario) -> Result<String> {
    let rec = ScenarioRecord {
        version: STORE_VERSION.to_owned(),
        scenario: s.clone(),
    };
    Ok(serde_json::to_string(&rec)?)
}

fn decode_line(line: &str, lineno: usize) -> Result<AtomScenario> {
    let rec: ScenarioRecord =
        serde_json::from_str(line).map_err(|e| Error::Data(format!("line {lineno}: {e}")))?;
    if rec.version != STORE_VERSION {
        return Err(Error::Load(format!(
            "line {lineno}: unsupported store version {:?}",
            rec.version
        )));
    }
    Ok(rec.scenario)
}

pub fn write_jsonl(path: impl AsRef<Path>, scenarios: &[AtomScenario]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in scenarios {
        writeln!(w, "{}", encode_line(s)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<AtomScenario>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode_line(&line, k + 1)?);
    }
    Ok(out)
}

/// Scenario lookup by id, optionally backed by an append-only JSONL file.
#[derive(Debug, Default, Clone)]
pub struct ScenarioStore {
    scenarios: Vec<AtomScenario>,
    by_id: HashMap<ScenarioId, usize>,
    path: Option<PathBuf>,
}

impl ScenarioStore {
    pub fn in_memory(scenarios: Vec<AtomScenario>) -> Result<Self> {
        let mut store = Self::default();
        for s in scenarios {
            store.push(s)?;
        }
        Ok(store)
    }

    /// Loads an existing file (or starts empty if it does not exist) and
    /// appends future additions to it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let scenarios = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
        let mut store = Self::in_memory(scenarios)?;
        store.path = Some(path);
        Ok(store)
    }

    fn push(&mut self, s: AtomScenario) -> Result<()> {
        if self.by_id.contains_key(&s.scenario_id) {
            return Err(Error::Input(format!("duplicate scenario id {}", s.scenario_id)));
        }
        self.by_id.insert(s.scenario_id.clone(), self.scenarios.len());
        self.scenarios.push(s);
        Ok(())
    }

    /// Appends a scenario. When file-backed the line is written and synced
    /// before the in-memory view changes.
    pub fn append(&mut self, s: AtomScenario) -> Result<()> {
        if self.by_id.contains_key(&s.scenario_id) {
            return Err(Error::Input(format!("duplicate scenario id {}", s.scenario_id)));
        }
        if let Some(path) = &self.path {
            let line = encode_line(&s)?;
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
            f.sync_data()?;
        }
        self.push(s)
    }

    pub fn get(&self, id: &ScenarioId) -> Option<&AtomScenario> {
        self.by_id.get(id).map(|&k| &self.scenarios[k])
    }

    pub fn contains(&self, id: &ScenarioId) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AtomScenario> {
        self.scenarios.iter()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_synthetic, SynthConfig};

    #[test]
    fn file_round_trip_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let scen = generate_synthetic(&SynthConfig {
            count: 4,
            ..SynthConfig::default()
        });
        write_jsonl(&path, &scen[..3]).unwrap();
        let mut store = ScenarioStore::open(&path).unwrap();
        assert_eq!(store.len(), 3);
        store.append(scen[3].clone()).unwrap();
        assert!(store.append(scen[3].clone()).is_err());
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, scen);
    }

    #[test]
    fn rejects_unknown_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let scen = generate_synthetic(&SynthConfig {
            count: 1,
            ..SynthConfig::default()
        });
        let line = encode_line(&scen[0]).unwrap().replace("\"version\":\"v1\"", "\"version\":\"v9\"");
        std::fs::write(&path, line).unwrap();
        assert!(matches!(read_jsonl(&path), Err(Error::Load(_))));
    }
}
