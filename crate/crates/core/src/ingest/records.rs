// SPDX-License-Identifier: MIT OR Apache-2.0

use super::IngestError;
use crate::ids::ParticipantId;
use serde::{Deserialize, Serialize};
use std::fmt;

/// The seven input files a cohort is assembled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Gps,
    Accel,
    Sms,
    Calls,
    Ema,
    Sias,
    Poi,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Gps,
        Channel::Accel,
        Channel::Sms,
        Channel::Calls,
        Channel::Ema,
        Channel::Sias,
        Channel::Poi,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Channel::Gps => "gps.csv",
            Channel::Accel => "accel.csv",
            Channel::Sms => "sms.csv",
            Channel::Calls => "calls.csv",
            Channel::Ema => "ema.csv",
            Channel::Sias => "sias.csv",
            Channel::Poi => "poi.csv",
        }
    }

    /// Channels whose file may be absent; the stream is then empty.
    pub fn optional(self) -> bool {
        !matches!(self, Channel::Ema | Channel::Sias)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name().trim_end_matches(".csv"))
    }
}

/// A row type of one input channel.
pub trait Record: Sized + Clone + PartialEq {
    const CHANNEL: Channel;
    const COLUMNS: &'static [&'static str];

    /// `fields` are in `COLUMNS` order.
    fn parse(fields: &[&str], line: u64) -> Result<Self, IngestError>;
    fn to_fields(&self) -> Vec<String>;
    /// Primary timestamp used for ordering; constant for untimed tables.
    fn time(&self) -> i64;
    fn participant(&self) -> Option<&ParticipantId>;
}

fn malformed(line: u64, column: &str, value: &str) -> IngestError {
    IngestError::MalformedRow {
        line,
        reason: format!("cannot parse `{value}` as {column}"),
    }
}

fn int(fields: &[&str], i: usize, col: &'static str, line: u64) -> Result<i64, IngestError> {
    fields[i].parse().map_err(|_| malformed(line, col, fields[i]))
}

fn real(fields: &[&str], i: usize, col: &'static str, line: u64) -> Result<f64, IngestError> {
    let v: f64 = fields[i].parse().map_err(|_| malformed(line, col, fields[i]))?;
    if !v.is_finite() {
        return Err(IngestError::RangeViolation { field: col, line });
    }
    Ok(v)
}

fn id(fields: &[&str], line: u64) -> Result<ParticipantId, IngestError> {
    if fields[0].is_empty() {
        return Err(IngestError::MalformedRow {
            line,
            reason: "empty participant_id".into(),
        });
    }
    Ok(ParticipantId::new(fields[0]))
}

fn check(ok: bool, field: &'static str, line: u64) -> Result<(), IngestError> {
    if ok {
        Ok(())
    } else {
        Err(IngestError::RangeViolation { field, line })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub participant_id: ParticipantId,
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

impl Record for GpsFix {
    const CHANNEL: Channel = Channel::Gps;
    const COLUMNS: &'static [&'static str] = &["participant_id", "timestamp", "lat", "lon"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        let lat = real(f, 2, "lat", line)?;
        let lon = real(f, 3, "lon", line)?;
        check((-90.0..=90.0).contains(&lat), "lat", line)?;
        check((-180.0..=180.0).contains(&lon), "lon", line)?;
        Ok(GpsFix {
            participant_id: id(f, line)?,
            timestamp: int(f, 1, "timestamp", line)?,
            lat,
            lon,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.participant_id.to_string(),
            self.timestamp.to_string(),
            self.lat.to_string(),
            self.lon.to_string(),
        ]
    }

    fn time(&self) -> i64 {
        self.timestamp
    }

    fn participant(&self) -> Option<&ParticipantId> {
        Some(&self.participant_id)
    }
}

/// One accelerometer reading, components in g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub participant_id: ParticipantId,
    pub timestamp: i64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Record for AccelSample {
    const CHANNEL: Channel = Channel::Accel;
    const COLUMNS: &'static [&'static str] = &["participant_id", "timestamp", "x", "y", "z"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        Ok(AccelSample {
            participant_id: id(f, line)?,
            timestamp: int(f, 1, "timestamp", line)?,
            x: real(f, 2, "x", line)?,
            y: real(f, 3, "y", line)?,
            z: real(f, 4, "z", line)?,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.participant_id.to_string(),
            self.timestamp.to_string(),
            self.x.to_string(),
            self.y.to_string(),
            self.z.to_string(),
        ]
    }

    fn time(&self) -> i64 {
        self.timestamp
    }

    fn participant(&self) -> Option<&ParticipantId> {
        Some(&self.participant_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageDirection {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageEvent {
    pub participant_id: ParticipantId,
    pub timestamp: i64,
    pub direction: MessageDirection,
}

impl Record for MessageEvent {
    const CHANNEL: Channel = Channel::Sms;
    const COLUMNS: &'static [&'static str] = &["participant_id", "timestamp", "direction"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        let direction = match f[2] {
            "sent" => MessageDirection::Sent,
            "received" => MessageDirection::Received,
            _ => {
                return Err(IngestError::RangeViolation {
                    field: "direction",
                    line,
                })
            }
        };
        Ok(MessageEvent {
            participant_id: id(f, line)?,
            timestamp: int(f, 1, "timestamp", line)?,
            direction,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        let dir = match self.direction {
            MessageDirection::Sent => "sent",
            MessageDirection::Received => "received",
        };
        vec![
            self.participant_id.to_string(),
            self.timestamp.to_string(),
            dir.to_string(),
        ]
    }

    fn time(&self) -> i64 {
        self.timestamp
    }

    fn participant(&self) -> Option<&ParticipantId> {
        Some(&self.participant_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallDirection {
    Incoming,
    Outgoing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallEvent {
    pub participant_id: ParticipantId,
    pub start: i64,
    /// Seconds, never negative.
    pub duration: i64,
    pub direction: CallDirection,
}

impl CallEvent {
    pub fn end(&self) -> i64 {
        self.start + self.duration
    }
}

impl Record for CallEvent {
    const CHANNEL: Channel = Channel::Calls;
    const COLUMNS: &'static [&'static str] = &["participant_id", "start", "duration", "direction"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        let duration = int(f, 2, "duration", line)?;
        check(duration >= 0, "duration", line)?;
        let direction = match f[3] {
            "in" => CallDirection::Incoming,
            "out" => CallDirection::Outgoing,
            _ => {
                return Err(IngestError::RangeViolation {
                    field: "direction",
                    line,
                })
            }
        };
        Ok(CallEvent {
            participant_id: id(f, line)?,
            start: int(f, 1, "start", line)?,
            duration,
            direction,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        let dir = match self.direction {
            CallDirection::Incoming => "in",
            CallDirection::Outgoing => "out",
        };
        vec![
            self.participant_id.to_string(),
            self.start.to_string(),
            self.duration.to_string(),
            dir.to_string(),
        ]
    }

    fn time(&self) -> i64 {
        self.start
    }

    fn participant(&self) -> Option<&ParticipantId> {
        Some(&self.participant_id)
    }
}

/// Self-reported affect at one prompt. Positive affect is stored but unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmaResponse {
    pub participant_id: ParticipantId,
    pub prompt_time: i64,
    pub negative_affect: u8,
    pub positive_affect: u8,
}

impl Record for EmaResponse {
    const CHANNEL: Channel = Channel::Ema;
    const COLUMNS: &'static [&'static str] = &["participant_id", "prompt_time", "negative", "positive"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        let neg = int(f, 2, "negative", line)?;
        let pos = int(f, 3, "positive", line)?;
        check((1..=100).contains(&neg), "negative", line)?;
        check((1..=100).contains(&pos), "positive", line)?;
        Ok(EmaResponse {
            participant_id: id(f, line)?,
            prompt_time: int(f, 1, "prompt_time", line)?,
            negative_affect: neg as u8,
            positive_affect: pos as u8,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.participant_id.to_string(),
            self.prompt_time.to_string(),
            self.negative_affect.to_string(),
            self.positive_affect.to_string(),
        ]
    }

    fn time(&self) -> i64 {
        self.prompt_time
    }

    fn participant(&self) -> Option<&ParticipantId> {
        Some(&self.participant_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiasScore {
    pub participant_id: ParticipantId,
    pub score: u32,
}

impl Record for SiasScore {
    const CHANNEL: Channel = Channel::Sias;
    const COLUMNS: &'static [&'static str] = &["participant_id", "score"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        let score = int(f, 1, "score", line)?;
        check((0..=u32::MAX as i64).contains(&score), "score", line)?;
        Ok(SiasScore {
            participant_id: id(f, line)?,
            score: score as u32,
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![self.participant_id.to_string(), self.score.to_string()]
    }

    fn time(&self) -> i64 {
        0
    }

    fn participant(&self) -> Option<&ParticipantId> {
        Some(&self.participant_id)
    }
}

/// A point of interest from the offline map snapshot, modeled as a circle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub place_id: String,
    pub lat: f64,
    pub lon: f64,
    pub radius_m: f64,
    pub osm_tag: String,
}

impl Record for PoiRecord {
    const CHANNEL: Channel = Channel::Poi;
    const COLUMNS: &'static [&'static str] = &["place_id", "lat", "lon", "radius_m", "osm_tag"];

    fn parse(f: &[&str], line: u64) -> Result<Self, IngestError> {
        let lat = real(f, 1, "lat", line)?;
        let lon = real(f, 2, "lon", line)?;
        let radius_m = real(f, 3, "radius_m", line)?;
        check((-90.0..=90.0).contains(&lat), "lat", line)?;
        check((-180.0..=180.0).contains(&lon), "lon", line)?;
        check(radius_m > 0.0, "radius_m", line)?;
        check(!f[4].is_empty(), "osm_tag", line)?;
        if f[0].is_empty() {
            return Err(IngestError::MalformedRow {
                line,
                reason: "empty place_id".into(),
            });
        }
        Ok(PoiRecord {
            place_id: f[0].to_string(),
            lat,
            lon,
            radius_m,
            osm_tag: f[4].to_string(),
        })
    }

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.place_id.clone(),
            self.lat.to_string(),
            self.lon.to_string(),
            self.radius_m.to_string(),
            self.osm_tag.clone(),
        ]
    }

    fn time(&self) -> i64 {
        0
    }

    fn participant(&self) -> Option<&ParticipantId> {
        None
    }
}
