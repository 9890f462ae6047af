//! Tracking records as JSON Lines: one object per attempt, append-safe.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{FailureFlag, ParameterSample, TrackingRecord};
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Wire form of one tracking record. Field names and order are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub seed: [f64; 3],
    pub step_size: f64,
    pub radius: f64,
    pub cone_angle: f64,
    pub fod_threshold: f64,
    pub accepted: bool,
    pub flags: Vec<FailureFlag>,
    pub n_backtracks: u32,
    pub n_points: u32,
    pub duration_us: u64,
    pub streamline_index: Option<u64>,
}

impl From<&TrackingRecord> for RecordLine {
    fn from(r: &TrackingRecord) -> Self {
        RecordLine {
            seed: r.seed_pos.to_array(),
            step_size: r.params.step_size,
            radius: r.params.radius,
            cone_angle: r.params.cone_angle,
            fod_threshold: r.params.fod_threshold,
            accepted: r.accepted,
            flags: r.flags.clone(),
            n_backtracks: r.n_backtracks,
            n_points: r.n_points,
            duration_us: r.duration_us,
            streamline_index: r.streamline_index,
        }
    }
}

impl From<RecordLine> for TrackingRecord {
    fn from(line: RecordLine) -> Self {
        TrackingRecord {
            seed_pos: Vec3::from_array(line.seed),
            params: ParameterSample {
                step_size: line.step_size,
                radius: line.radius,
                cone_angle: line.cone_angle,
                fod_threshold: line.fod_threshold,
            },
            accepted: line.accepted,
            flags: line.flags,
            n_backtracks: line.n_backtracks,
            n_points: line.n_points,
            duration_us: line.duration_us,
            streamline_index: line.streamline_index,
        }
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[TrackingRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for record in records {
        let line = RecordLine::from(record);
        serde_json::to_writer(&mut out, &line)
            .map_err(|e| Error::format(format!("record serialization: {e}")))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read records back; blank lines are skipped, malformed lines report their
/// 1-based line number.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TrackingRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", i + 1)))?;
        records.push(parsed.into());
    }
    Ok(records)
}
