// SPDX-License-Identifier: MIT OR Apache-2.0

//! Loading and validation of raw behavioral streams.
//!
//! Each channel is a headed UTF-8 CSV file. Rows are range-checked while
//! parsing, identical rows are dropped (counted in the [`LoadReport`]) and
//! records are stably sorted by their primary timestamp.

mod cohort;
mod records;

pub use cohort::{build_cohort, load_cohort, write_cohort, ParticipantStreams, RawCohort, Streams};
pub use records::{
    AccelSample, CallDirection, CallEvent, Channel, EmaResponse, GpsFix, MessageDirection, MessageEvent, PoiRecord,
    Record, SiasScore,
};

use serde::Serialize;
use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("missing column `{0}`")]
    SchemaMismatch(String),
    #[error("value out of range for `{field}` at line {line}")]
    RangeViolation { field: &'static str, line: u64 },
    #[error("EMA references unknown participant `{0}`")]
    OrphanEma(String),
    #[error("{channel} record references unknown participant `{participant}`")]
    OrphanRecord { channel: Channel, participant: String },
    #[error("more than one SIAS score for `{0}`")]
    DuplicateScore(String),
    #[error("cohort has no participant with an EMA response")]
    EmptyCohort,
}

impl IngestError {
    /// The offending field for range violations.
    pub fn field(&self) -> Option<&'static str> {
        match self {
            IngestError::RangeViolation { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub channel: Channel,
    pub rows_read: usize,
    pub duplicates_dropped: usize,
    /// `false` when an optional channel file was absent.
    pub present: bool,
}

/// Records of any one channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelData {
    Gps(Vec<GpsFix>),
    Accel(Vec<AccelSample>),
    Sms(Vec<MessageEvent>),
    Calls(Vec<CallEvent>),
    Ema(Vec<EmaResponse>),
    Sias(Vec<SiasScore>),
    Poi(Vec<PoiRecord>),
}

impl ChannelData {
    pub fn len(&self) -> usize {
        match self {
            ChannelData::Gps(v) => v.len(),
            ChannelData::Accel(v) => v.len(),
            ChannelData::Sms(v) => v.len(),
            ChannelData::Calls(v) => v.len(),
            ChannelData::Ema(v) => v.len(),
            ChannelData::Sias(v) => v.len(),
            ChannelData::Poi(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Load one channel file, dispatching on `channel`.
pub fn load_channel(path: &Path, channel: Channel) -> Result<(ChannelData, LoadReport), IngestError> {
    Ok(match channel {
        Channel::Gps => wrap(load_records(path)?, ChannelData::Gps),
        Channel::Accel => wrap(load_records(path)?, ChannelData::Accel),
        Channel::Sms => wrap(load_records(path)?, ChannelData::Sms),
        Channel::Calls => wrap(load_records(path)?, ChannelData::Calls),
        Channel::Ema => wrap(load_records(path)?, ChannelData::Ema),
        Channel::Sias => wrap(load_records(path)?, ChannelData::Sias),
        Channel::Poi => wrap(load_records(path)?, ChannelData::Poi),
    })
}

fn wrap<T>(
    (records, report): (Vec<T>, LoadReport),
    f: impl FnOnce(Vec<T>) -> ChannelData,
) -> (ChannelData, LoadReport) {
    (f(records), report)
}

pub fn load_records<T: Record>(path: &Path) -> Result<(Vec<T>, LoadReport), IngestError> {
    let mut file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    file.read_to_string(&mut text).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_records(text.as_bytes())
}

/// Parse a channel from CSV text. Extra columns are ignored.
pub fn parse_records<T: Record>(input: &[u8]) -> Result<(Vec<T>, LoadReport), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedRow {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let index: Vec<usize> = T::COLUMNS
        .iter()
        .map(|col| {
            headers
                .iter()
                .position(|h| h == *col)
                .ok_or_else(|| IngestError::SchemaMismatch(col.to_string()))
        })
        .collect::<Result<_, _>>()?;

    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut records = Vec::new();
    let mut rows_read = 0;
    let mut raw = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut raw) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(IngestError::MalformedRow {
                    line,
                    reason: e.to_string(),
                })
            }
        }
        let line = raw.position().map(|p| p.line()).unwrap_or(line);
        rows_read += 1;
        if raw.len() != headers.len() {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", headers.len(), raw.len()),
            });
        }
        let fields: Vec<&str> = index.iter().map(|&i| &raw[i]).collect();
        let record = T::parse(&fields, line)?;
        if seen.insert(fields.iter().map(|s| s.to_string()).collect()) {
            records.push(record);
        }
    }
    records.sort_by_key(|r| r.time());
    let report = LoadReport {
        channel: T::CHANNEL,
        rows_read,
        duplicates_dropped: rows_read - records.len(),
        present: true,
    };
    Ok((records, report))
}

pub fn write_records<T: Record, W: Write>(out: W, records: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(T::COLUMNS)?;
    for r in records {
        w.write_record(r.to_fields())?;
    }
    w.flush()?;
    Ok(())
}
