//! Stay records and their line-delimited JSON representation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::NoteEvent;
use crate::vitals::VitalEvent;
use crate::{Error, Result};

pub const STAYS_FILE: &str = "stays.jsonl";
pub const VITALS_FILE: &str = "vitals.jsonl";
pub const NOTES_FILE: &str = "notes.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Per-stay header line of `stays.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayMeta {
    pub stay_id: u64,
    pub patient_id: u64,
    pub label: u8,
}

/// One ICU stay with its raw events.
#[derive(Debug, Clone, PartialEq)]
pub struct StayRecord {
    pub stay_id: u64,
    pub patient_id: u64,
    pub label: u8,
    pub vitals: Vec<VitalEvent>,
    pub notes: Vec<NoteEvent>,
    pub split: Option<Split>,
}

impl StayRecord {
    pub fn meta(&self) -> StayMeta {
        StayMeta {
            stay_id: self.stay_id,
            patient_id: self.patient_id,
            label: self.label,
        }
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, &r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes `stays.jsonl`, `vitals.jsonl` and `notes.jsonl` into `dir`.
pub fn write_cohort(dir: &Path, stays: &[StayRecord]) -> Result<()> {
    write_jsonl(&dir.join(STAYS_FILE), stays.iter().map(StayRecord::meta))?;
    write_jsonl(&dir.join(VITALS_FILE), stays.iter().flat_map(|s| s.vitals.iter()))?;
    write_jsonl(&dir.join(NOTES_FILE), stays.iter().flat_map(|s| s.notes.iter()))?;
    Ok(())
}

/// Reassembles stay records from the three line-delimited files, keeping the
/// order of `stays.jsonl` and the file order of events within each stay.
pub fn read_cohort(dir: &Path) -> Result<Vec<StayRecord>> {
    let metas: Vec<StayMeta> = read_jsonl(&dir.join(STAYS_FILE))?;
    let vitals: Vec<VitalEvent> = read_jsonl(&dir.join(VITALS_FILE))?;
    let notes: Vec<NoteEvent> = read_jsonl(&dir.join(NOTES_FILE))?;
    let mut by_id: BTreeMap<u64, StayRecord> = BTreeMap::new();
    for m in &metas {
        let prev = by_id.insert(
            m.stay_id,
            StayRecord {
                stay_id: m.stay_id,
                patient_id: m.patient_id,
                label: m.label,
                vitals: Vec::new(),
                notes: Vec::new(),
                split: None,
            },
        );
        if prev.is_some() {
            return Err(Error::Data(format!("duplicate stay id {}", m.stay_id)));
        }
        if m.label > 1 {
            return Err(Error::Data(format!("stay {} has label {}", m.stay_id, m.label)));
        }
    }
    for v in vitals {
        by_id
            .get_mut(&v.stay_id)
            .ok_or_else(|| Error::Data(format!("vital event for unknown stay {}", v.stay_id)))?
            .vitals
            .push(v);
    }
    for n in notes {
        by_id
            .get_mut(&n.stay_id)
            .ok_or_else(|| Error::Data(format!("note for unknown stay {}", n.stay_id)))?
            .notes
            .push(n);
    }
    Ok(metas
        .iter()
        .map(|m| by_id.remove(&m.stay_id).expect("inserted above"))
        .collect())
}
