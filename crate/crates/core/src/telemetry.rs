//! Wrist-unit vitals link.
//!
//! Wire form, one ASCII line per frame:
//!
//! ```text
//! PHY,<seq>,<pulse>,<spo2>,<battery_mv>*<CK>\n
//! ```
//!
//! `CK` is the NMEA-style XOR of every byte before `*`, as two uppercase hex
//! digits. Pulse and SpO2 carry one decimal place. `seq` is a wrapping `u16`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nmea::{checksum, checksum_hex, parse_checksum_field};
use crate::scalar::Scalar;

pub const PULSE_MIN_BPM: f64 = 20.0;
pub const PULSE_MAX_BPM: f64 = 250.0;
pub const SPO2_MIN_PCT: f64 = 0.0;
pub const SPO2_MAX_PCT: f64 = 100.0;

/// Readings averaged by [`smooth`].
pub const SMOOTHING_WINDOW: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("framing: {0}")]
    Framing(&'static str),
    #[error("checksum mismatch: frame says {stated:02X}, payload folds to {computed:02X}")]
    Checksum { stated: u8, computed: u8 },
    #[error("{field} = {value} outside [{min}, {max}]")]
    Range {
        field: &'static str,
        value: String,
        min: f64,
        max: f64,
    },
    #[error("cannot encode: {0}")]
    Encode(Box<TelemetryError>),
    #[error("no readings to smooth")]
    NoData,
}

fn check_range<S: Scalar>(
    field: &'static str,
    value: S,
    min: f64,
    max: f64,
) -> Result<(), TelemetryError> {
    if value >= S::lit(min) && value <= S::lit(max) {
        Ok(())
    } else {
        Err(TelemetryError::Range {
            field,
            value: value.to_string(),
            min,
            max,
        })
    }
}

fn check_vitals<S: Scalar>(pulse: S, spo2: S) -> Result<(), TelemetryError> {
    check_range("pulse_bpm", pulse, PULSE_MIN_BPM, PULSE_MAX_BPM)?;
    check_range("spo2_pct", spo2, SPO2_MIN_PCT, SPO2_MAX_PCT)
}

/// Vitals as seen by the helmet unit. `stale` is derived locally from the
/// reading's age, never sent over the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysioReading<S: Scalar = f64> {
    pub pulse_bpm: S,
    pub spo2_pct: S,
    pub received_at_ms: u64,
    pub stale: bool,
}

impl<S: Scalar> PhysioReading<S> {
    pub fn new(pulse_bpm: S, spo2_pct: S, received_at_ms: u64) -> Result<Self, TelemetryError> {
        check_vitals(pulse_bpm, spo2_pct)?;
        Ok(Self {
            pulse_bpm,
            spo2_pct,
            received_at_ms,
            stale: false,
        })
    }

    pub fn from_frame(frame: &TelemetryFrame<S>, received_at_ms: u64) -> Self {
        Self {
            pulse_bpm: frame.pulse_bpm,
            spo2_pct: frame.spo2_pct,
            received_at_ms,
            stale: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame<S: Scalar = f64> {
    pub seq: u16,
    pub pulse_bpm: S,
    pub spo2_pct: S,
    pub battery_mv: u16,
}

pub fn encode_frame<S: Scalar>(frame: &TelemetryFrame<S>) -> Result<String, TelemetryError> {
    check_vitals(frame.pulse_bpm, frame.spo2_pct)
        .map_err(|e| TelemetryError::Encode(Box::new(e)))?;
    let payload = format!(
        "PHY,{},{:.1},{:.1},{}",
        frame.seq, frame.pulse_bpm, frame.spo2_pct, frame.battery_mv
    );
    let ck = checksum_hex(payload.as_bytes());
    Ok(format!("{payload}*{ck}\n"))
}

fn parse_num<T: std::str::FromStr>(field: &str) -> Result<T, TelemetryError> {
    if field.is_empty()
        || !field
            .bytes()
            .all(|b| b.is_ascii_digit() || b == b'.' || b == b'-')
    {
        return Err(TelemetryError::Framing("non-numeric field"));
    }
    field
        .parse()
        .map_err(|_| TelemetryError::Framing("non-numeric field"))
}

/// Checksum is verified before any field is looked at.
pub fn decode_frame<S: Scalar>(line: &[u8]) -> Result<TelemetryFrame<S>, TelemetryError> {
    let line = line
        .strip_suffix(b"\n")
        .ok_or(TelemetryError::Framing("missing newline terminator"))?;
    let star = line
        .iter()
        .rposition(|&b| b == b'*')
        .ok_or(TelemetryError::Framing("missing '*'"))?;
    let (payload, digits) = (&line[..star], &line[star + 1..]);
    let stated = parse_checksum_field(digits)
        .ok_or(TelemetryError::Framing("checksum is not two hex digits"))?;
    let computed = checksum(payload);
    if stated != computed {
        return Err(TelemetryError::Checksum { stated, computed });
    }
    let text = std::str::from_utf8(payload).map_err(|_| TelemetryError::Framing("not ASCII"))?;
    let fields: Vec<&str> = text.split(',').collect();
    let [tag, seq, pulse, spo2, battery] = fields[..] else {
        return Err(TelemetryError::Framing("expected 5 comma-separated fields"));
    };
    if tag != "PHY" {
        return Err(TelemetryError::Framing("not a PHY frame"));
    }
    let frame = TelemetryFrame {
        seq: parse_num(seq)?,
        pulse_bpm: parse_num(pulse)?,
        spo2_pct: parse_num(spo2)?,
        battery_mv: parse_num(battery)?,
    };
    check_vitals(frame.pulse_bpm, frame.spo2_pct)?;
    Ok(frame)
}

/// Mean of the newest [`SMOOTHING_WINDOW`] readings (newest last in the
/// slice). Timestamp and stale flag come from the newest reading.
pub fn smooth<S: Scalar>(
    readings: &[PhysioReading<S>],
) -> Result<PhysioReading<S>, TelemetryError> {
    let newest = readings.last().ok_or(TelemetryError::NoData)?;
    let window = &readings[readings.len().saturating_sub(SMOOTHING_WINDOW)..];
    let mean = |f: fn(&PhysioReading<S>) -> S| {
        let (lo, hi, sum) = window.iter().map(f).fold(
            (S::infinity(), S::neg_infinity(), S::zero()),
            |(lo, hi, sum), v| (lo.min(v), hi.max(v), sum + v),
        );
        let n = S::from_usize(window.len()).expect("window fits");
        (sum / n).max(lo).min(hi)
    };
    Ok(PhysioReading {
        pulse_bpm: mean(|r| r.pulse_bpm),
        spo2_pct: mean(|r| r.spo2_pct),
        received_at_ms: newest.received_at_ms,
        stale: newest.stale,
    })
}

fn whole<S: Scalar>(v: S) -> i64 {
    v.round().to_i64().unwrap_or_default()
}

/// Two display lines for the wrist unit's screen.
pub fn format_display<S: Scalar>(reading: Option<&PhysioReading<S>>) -> [String; 2] {
    match reading {
        None => ["PULSE -- bpm".to_string(), "SpO2 -- %".to_string()],
        Some(r) => {
            let suffix = if r.stale { " (STALE)" } else { "" };
            [
                format!("PULSE {} bpm", whole(r.pulse_bpm)),
                format!("SpO2 {} %{suffix}", whole(r.spo2_pct)),
            ]
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LinkStats {
    pub accepted: u64,
    pub lost_frames: u64,
    pub duplicates: u64,
    pub checksum_errors: u64,
    pub range_errors: u64,
    pub framing_errors: u64,
}

/// Sequence gap bookkeeping with 16-bit wrap.
#[derive(Debug, Clone, Copy, Default)]
pub struct SequenceTracker {
    last: Option<u16>,
}

impl SequenceTracker {
    /// Frames missing between the previous sequence number and `seq`, or
    /// `None` for a repeat of the previous number.
    pub fn observe(&mut self, seq: u16) -> Option<u16> {
        let gap = match self.last {
            None => 0,
            Some(prev) => match seq.wrapping_sub(prev) {
                0 => return None,
                jump => jump - 1,
            },
        };
        self.last = Some(seq);
        Some(gap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkEvent<S: Scalar = f64> {
    Accepted {
        t_ms: u64,
        seq: u16,
        reading: PhysioReading<S>,
    },
    Lost {
        t_ms: u64,
        seq: u16,
        missing: u16,
    },
    Duplicate {
        t_ms: u64,
        seq: u16,
    },
    Dropped {
        t_ms: u64,
        error: TelemetryError,
    },
}

/// Helmet side of the vitals link: a FIFO of raw lines, drained once per
/// tick into the latest-reading register.
#[derive(Debug, Clone, Default)]
pub struct PhysioLink<S: Scalar = f64> {
    fifo: VecDeque<(u64, Vec<u8>)>,
    seq: SequenceTracker,
    history: VecDeque<PhysioReading<S>>,
    stats: LinkStats,
}

impl<S: Scalar> PhysioLink<S> {
    pub fn new() -> Self {
        Self {
            fifo: VecDeque::new(),
            seq: SequenceTracker::default(),
            history: VecDeque::with_capacity(SMOOTHING_WINDOW),
            stats: LinkStats::default(),
        }
    }

    pub fn push(&mut self, t_ms: u64, line: impl Into<Vec<u8>>) {
        self.fifo.push_back((t_ms, line.into()));
    }

    pub fn pending(&self) -> usize {
        self.fifo.len()
    }

    pub fn drain(&mut self) -> Vec<LinkEvent<S>> {
        let mut events = Vec::new();
        while let Some((t_ms, line)) = self.fifo.pop_front() {
            let frame = match decode_frame::<S>(&line) {
                Ok(f) => f,
                Err(error) => {
                    match error {
                        TelemetryError::Checksum { .. } => self.stats.checksum_errors += 1,
                        TelemetryError::Range { .. } => self.stats.range_errors += 1,
                        _ => self.stats.framing_errors += 1,
                    }
                    events.push(LinkEvent::Dropped { t_ms, error });
                    continue;
                }
            };
            match self.seq.observe(frame.seq) {
                None => {
                    self.stats.duplicates += 1;
                    events.push(LinkEvent::Duplicate {
                        t_ms,
                        seq: frame.seq,
                    });
                    continue;
                }
                Some(0) => {}
                Some(missing) => {
                    self.stats.lost_frames += u64::from(missing);
                    events.push(LinkEvent::Lost {
                        t_ms,
                        seq: frame.seq,
                        missing,
                    });
                }
            }
            let reading = PhysioReading::from_frame(&frame, t_ms);
            if self.history.len() == SMOOTHING_WINDOW {
                self.history.pop_front();
            }
            self.history.push_back(reading);
            self.stats.accepted += 1;
            events.push(LinkEvent::Accepted {
                t_ms,
                seq: frame.seq,
                reading,
            });
        }
        events
    }

    /// Smoothed latest vitals, if any frame has been accepted.
    pub fn latest(&self) -> Option<PhysioReading<S>> {
        let (a, b) = self.history.as_slices();
        let joined: Vec<_> = a.iter().chain(b).copied().collect();
        smooth(&joined).ok()
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }
}
