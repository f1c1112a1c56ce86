//! Trial CSV: one row per session.
//!
//! The first line is a schema comment, the second the column header.
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back yields bit-identical values. Empty cells mean "absent".

use std::io::{BufRead, BufReader, Read, Write};

use crate::pose::RigidPose;
use crate::sim::{Approach, RoomSwitchEvent, TrialRecord};

use super::EvalError;

pub const SCHEMA_LINE: &str = "# beacon-sync trials v1";

pub const COLUMNS: [&str; 14] = [
    "trial",
    "group",
    "device",
    "seed",
    "approach",
    "env_change",
    "success",
    "delay_s",
    "time_to_stable_s",
    "room",
    "position_errors_m",
    "orientation_errors_rad",
    "ref_pose",
    "room_switches",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn list(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(f64::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

/// `t:from>to` entries joined by `;`; `from` is empty for the first room.
fn switches(events: &[RoomSwitchEvent]) -> String {
    events
        .iter()
        .map(|e| format!("{}:{}>{}", e.timestamp, e.from.as_deref().unwrap_or(""), e.to))
        .collect::<Vec<_>>()
        .join(";")
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), EvalError> {
    let mut out = out;
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(csv_io)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.group.to_string(),
            r.device.to_string(),
            r.seed.to_string(),
            r.approach.to_string(),
            r.environment_change.to_string(),
            r.success.to_string(),
            opt(r.localization_delay),
            opt(r.time_to_stable),
            r.room.clone().unwrap_or_default(),
            list(&r.position_errors, ";"),
            list(&r.orientation_errors, ";"),
            r.reference_pose
                .map(|p| list(&p.to_row_major(), " "))
                .unwrap_or_default(),
            switches(&r.room_switch_events),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> EvalError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => EvalError::Io(e),
        other => EvalError::SchemaMismatch(format!("{other:?}")),
    }
}

struct Row<'a> {
    line: u64,
    record: &'a csv::StringRecord,
}

impl Row<'_> {
    fn cell(&self, col: usize) -> &str {
        self.record.get(col).unwrap_or("")
    }

    fn bad(&self, col: usize, why: impl std::fmt::Display) -> EvalError {
        EvalError::SchemaMismatch(format!("line {} column {}: {why}", self.line, COLUMNS[col]))
    }

    fn parse<T: std::str::FromStr>(&self, col: usize) -> Result<T, EvalError>
    where
        T::Err: std::fmt::Display,
    {
        self.cell(col).parse().map_err(|e| self.bad(col, e))
    }

    fn float(&self, col: usize) -> Result<f64, EvalError> {
        let v: f64 = self.parse(col)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.bad(col, "not a finite number"))
        }
    }

    fn opt_float(&self, col: usize) -> Result<Option<f64>, EvalError> {
        if self.cell(col).is_empty() {
            Ok(None)
        } else {
            self.float(col).map(Some)
        }
    }

    fn floats(&self, col: usize, sep: char) -> Result<Vec<f64>, EvalError> {
        let cell = self.cell(col);
        if cell.is_empty() {
            return Ok(Vec::new());
        }
        cell.split(sep)
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.bad(col, format!("bad number {s:?}")))
            })
            .collect()
    }

    fn switches(&self, col: usize) -> Result<Vec<RoomSwitchEvent>, EvalError> {
        let cell = self.cell(col);
        if cell.is_empty() {
            return Ok(Vec::new());
        }
        cell.split(';')
            .map(|entry| {
                let bad = || self.bad(col, format!("bad room switch {entry:?}"));
                let (t, rooms) = entry.split_once(':').ok_or_else(bad)?;
                let (from, to) = rooms.split_once('>').ok_or_else(bad)?;
                let timestamp = t.parse::<f64>().map_err(|_| bad())?;
                if to.is_empty() {
                    return Err(bad());
                }
                Ok(RoomSwitchEvent {
                    timestamp,
                    from: (!from.is_empty()).then(|| from.to_owned()),
                    to: to.to_owned(),
                })
            })
            .collect()
    }
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>, EvalError> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let first = first.trim_end_matches(['\r', '\n']);
    if first != SCHEMA_LINE {
        return Err(EvalError::SchemaMismatch(format!(
            "expected first line {SCHEMA_LINE:?}, found {first:?}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    let header = reader.headers().map_err(csv_io)?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(EvalError::SchemaMismatch(format!(
            "expected columns {}, found {}",
            COLUMNS.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let record = result.map_err(csv_io)?;
        let row = Row {
            line: i as u64 + 3,
            record: &record,
        };
        let approach: Approach = row.parse(4)?;
        let reference_pose = match row.floats(12, ' ')? {
            v if v.is_empty() => None,
            v => Some(RigidPose::from_row_major(&v).map_err(|e| row.bad(12, e))?),
        };
        let r = TrialRecord {
            trial: row.parse(0)?,
            group: row.parse(1)?,
            device: row.parse(2)?,
            seed: row.parse(3)?,
            approach,
            environment_change: row.float(5)?,
            success: row.parse(6)?,
            localization_delay: row.opt_float(7)?,
            time_to_stable: row.opt_float(8)?,
            room: Some(row.cell(9).to_owned()).filter(|s| !s.is_empty()),
            position_errors: row.floats(10, ';')?,
            orientation_errors: row.floats(11, ';')?,
            reference_pose,
            room_switch_events: row.switches(13)?,
        };
        if r.success != r.localization_delay.is_some() {
            return Err(row.bad(7, "delay must be present exactly when success is true"));
        }
        if !r.success && !(r.position_errors.is_empty() && r.orientation_errors.is_empty()) {
            return Err(row.bad(10, "failed trials carry no errors"));
        }
        if r.position_errors.len() != r.orientation_errors.len() {
            return Err(row.bad(11, "one orientation error per position error"));
        }
        records.push(r);
    }
    Ok(records)
}
