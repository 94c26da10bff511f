//! Ride traces: JSONL, one sensor record per line.
//!
//! ```text
//! {"t_ms":0,"kind":"tilt","ax":12,"ay":-40,"az":250}
//! {"t_ms":250,"kind":"nmea","line":"$GPGGA,...*5C"}
//! {"t_ms":550,"kind":"phy","line":"PHY,0,74.2,97.1,3700*3B\n"}
//! ```
//!
//! Timestamps never go backwards across the file and strictly increase
//! within one kind.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::TiltSample;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TraceError::Malformed { line, .. } => Some(*line),
            TraceError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RecordData {
    Tilt { ax: i16, ay: i16, az: i16 },
    Nmea { line: String },
    Phy { line: String },
}

impl RecordData {
    fn slot(&self) -> usize {
        match self {
            RecordData::Tilt { .. } => 0,
            RecordData::Nmea { .. } => 1,
            RecordData::Phy { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: u64,
    #[serde(flatten)]
    pub data: RecordData,
}

impl TraceRecord {
    pub fn tilt(sample: TiltSample) -> Self {
        Self {
            t_ms: sample.timestamp_ms,
            data: RecordData::Tilt {
                ax: sample.ax,
                ay: sample.ay,
                az: sample.az,
            },
        }
    }

    pub fn nmea(t_ms: u64, line: impl Into<String>) -> Self {
        Self {
            t_ms,
            data: RecordData::Nmea { line: line.into() },
        }
    }

    pub fn phy(t_ms: u64, line: impl Into<String>) -> Self {
        Self {
            t_ms,
            data: RecordData::Phy { line: line.into() },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RideTrace {
    pub records: Vec<TraceRecord>,
}

impl RideTrace {
    /// Check the ordering invariants. Errors carry 1-based record numbers.
    pub fn validate(&self) -> Result<(), TraceError> {
        let mut last_any = 0u64;
        let mut last_kind: [Option<u64>; 3] = [None; 3];
        for (i, r) in self.records.iter().enumerate() {
            check_order(r, i + 1, &mut last_any, &mut last_kind)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self, TraceError> {
        let mut records = Vec::new();
        let mut last_any = 0u64;
        let mut last_kind: [Option<u64>; 3] = [None; 3];
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord =
                serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            check_order(&record, i + 1, &mut last_any, &mut last_kind)?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn tilt_samples(&self) -> impl Iterator<Item = (u64, i16, i16, i16)> + '_ {
        self.records.iter().filter_map(|r| match r.data {
            RecordData::Tilt { ax, ay, az } => Some((r.t_ms, ax, ay, az)),
            _ => None,
        })
    }
}

fn check_order(
    r: &TraceRecord,
    line: usize,
    last_any: &mut u64,
    last_kind: &mut [Option<u64>; 3],
) -> Result<(), TraceError> {
    let malformed = |message: String| TraceError::Malformed { line, message };
    if r.t_ms < *last_any {
        return Err(malformed(format!(
            "t_ms {} goes back from {}",
            r.t_ms, last_any
        )));
    }
    let slot = &mut last_kind[r.data.slot()];
    if let Some(prev) = *slot {
        if r.t_ms <= prev {
            return Err(malformed(format!(
                "t_ms {} repeats or precedes {prev} for this kind",
                r.t_ms
            )));
        }
    }
    if let RecordData::Tilt { ax, ay, az } = r.data {
        TiltSample::new(r.t_ms, ax.into(), ay.into(), az.into())
            .map_err(|e| malformed(e.to_string()))?;
    }
    *last_any = r.t_ms;
    *slot = Some(r.t_ms);
    Ok(())
}
