//! Replays a ride trace through the whole pipeline in virtual time.
//!
//! Records are consumed in file order. GPS lines update the fix register as
//! they arrive; wrist-unit lines are queued and drained at the next tilt
//! sample, which is the detector's tick. A confirmation snapshots the latest
//! fix and smoothed vitals, composes the alert and runs one modem session
//! per confirmation. The transcript records every detector transition,
//! dropped or missing frame, modem transfer and alert.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use super::trace::{RecordData, RideTrace, TraceRecord};
use crate::config::SimConfig;
use crate::detection::{
    snapshot_context, tilt_angle_deg, AccidentEvent, DetectionError, Detector, DetectorConfig,
    Mode, TiltSample, TriggerAxis,
};
use crate::gsm::{
    compose_sms, send_sms, DeliveryReport, Direction, DriverSettings, GsmError, ModemEmulator,
    ModemScript, PhoneNumber, RecipientOutcome, SmsRequest,
};
use crate::nmea::{FixRegister, GeoFix, NmeaError, NmeaStats};
use crate::telemetry::{LinkEvent, LinkStats, PhysioLink, PhysioReading};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace record {line}: {source}")]
    Record {
        line: usize,
        #[source]
        source: DetectionError,
    },
    #[error(transparent)]
    Config(#[from] DetectionError),
    #[error(transparent)]
    Sms(#[from] GsmError),
}

#[derive(Debug, Clone)]
pub struct ReplayOptions {
    pub detector: DetectorConfig,
    pub staleness_ms: u64,
    pub driver: DriverSettings,
    pub modem: ModemScript,
    /// Re-arm the detector on the first stable sample after a confirmation.
    pub rearm: bool,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        Self::from_config(&SimConfig::default()).expect("default config is valid")
    }
}

impl ReplayOptions {
    pub fn from_config(config: &SimConfig) -> Result<Self, DetectionError> {
        Ok(Self {
            detector: config.detector()?,
            staleness_ms: config.staleness_ms(),
            driver: config.driver(),
            modem: ModemScript::happy_path(),
            rearm: false,
        })
    }
}

/// One transcript line. Serialised with an `"event"` tag.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptLine {
    State {
        t_ms: u64,
        from: Mode,
        to: Mode,
        ax: i16,
        ay: i16,
        /// Reporting angle of the y axis.
        y_angle_deg: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<&'static str>,
    },
    Dropped {
        t_ms: u64,
        stream: &'static str,
        line: usize,
        reason: String,
    },
    FrameGap {
        t_ms: u64,
        seq: u16,
        missing: u16,
    },
    Accident {
        t_ms: u64,
        detected_at_ms: u64,
        confirmed_at_ms: u64,
        trigger_axis: TriggerAxis,
        trigger_value: i16,
        fix: Option<GeoFix>,
        physio: Option<PhysioReading>,
    },
    At {
        t_ms: u64,
        direction: Direction,
        bytes: String,
    },
    Sms {
        t_ms: u64,
        body: String,
        outcomes: Vec<RecipientOutcome>,
    },
    Summary {
        t_ms: u64,
        accident_confirmed: bool,
        accidents: usize,
        sms_delivered: usize,
        sms_failed: usize,
        tilt_samples: u64,
        nmea: NmeaStats,
        phy: LinkStats,
    },
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub transcript: Vec<TranscriptLine>,
    pub accidents: Vec<AccidentEvent>,
    pub reports: Vec<DeliveryReport>,
}

impl ReplayOutcome {
    pub fn accident_confirmed(&self) -> bool {
        !self.accidents.is_empty()
    }

    /// Process exit status: 0 without an accident, 2 with one.
    pub fn exit_code(&self) -> u8 {
        if self.accident_confirmed() {
            2
        } else {
            0
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for line in &self.transcript {
            serde_json::to_writer(&mut out, line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}

struct Pipeline<'a> {
    options: &'a ReplayOptions,
    contacts: &'a [PhoneNumber],
    detector: Detector,
    fixes: FixRegister,
    link: PhysioLink<f64>,
    modem: ModemEmulator,
    /// Trace line of each queued wrist-unit frame, in FIFO order.
    queued_lines: std::collections::VecDeque<usize>,
    out: ReplayOutcome,
    tilt_samples: u64,
    clock_ms: u64,
}

impl Pipeline<'_> {
    fn drain_link(&mut self) {
        for event in self.link.drain() {
            let line = self.queued_lines.pop_front().unwrap_or_default();
            match event {
                LinkEvent::Accepted { .. } => {}
                LinkEvent::Lost { t_ms, seq, missing } => self
                    .out
                    .transcript
                    .push(TranscriptLine::FrameGap { t_ms, seq, missing }),
                LinkEvent::Duplicate { t_ms, seq } => {
                    self.out.transcript.push(TranscriptLine::Dropped {
                        t_ms,
                        stream: "phy",
                        line,
                        reason: format!("duplicate seq {seq}"),
                    })
                }
                LinkEvent::Dropped { t_ms, error } => {
                    self.out.transcript.push(TranscriptLine::Dropped {
                        t_ms,
                        stream: "phy",
                        line,
                        reason: error.to_string(),
                    })
                }
            }
        }
    }

    fn on_nmea(&mut self, t_ms: u64, text: &str, line: usize) {
        match self.fixes.ingest(text.as_bytes(), t_ms) {
            Ok(_) | Err(NmeaError::UnsupportedSentence(_)) => {}
            Err(e) => self.out.transcript.push(TranscriptLine::Dropped {
                t_ms,
                stream: "nmea",
                line,
                reason: e.to_string(),
            }),
        }
    }

    fn on_tilt(&mut self, sample: TiltSample, line: usize) -> Result<(), ReplayError> {
        self.drain_link();
        self.tilt_samples += 1;
        let step = self
            .detector
            .ingest::<f64>(sample)
            .map_err(|source| ReplayError::Record { line, source })?;
        let t_ms = sample.timestamp_ms;
        let y_angle_deg = tilt_angle_deg::<f64>(sample.ay.into()).expect("validated sample");
        let transition = |from, to, reason| TranscriptLine::State {
            t_ms,
            from,
            to,
            ax: sample.ax,
            ay: sample.ay,
            y_angle_deg,
            reason,
        };
        if step.rearmed {
            self.out
                .transcript
                .push(transition(Mode::Confirmed, Mode::Monitoring, Some("rearm")));
        } else if step.from != step.to {
            self.out
                .transcript
                .push(transition(step.from, step.to, None));
        }
        if let Some(event) = step.event {
            self.on_accident(event, t_ms)?;
        }
        Ok(())
    }

    fn on_accident(&mut self, event: AccidentEvent, t_ms: u64) -> Result<(), ReplayError> {
        let latest_physio = self.link.latest();
        let event = snapshot_context(
            event,
            self.fixes.latest(),
            latest_physio.as_ref(),
            t_ms,
            self.options.staleness_ms,
        );
        self.out.transcript.push(TranscriptLine::Accident {
            t_ms,
            detected_at_ms: event.detected_at_ms,
            confirmed_at_ms: event.confirmed_at_ms,
            trigger_axis: event.trigger_axis,
            trigger_value: event.trigger_value,
            fix: event.fix.clone(),
            physio: event.physio,
        });

        let body = compose_sms(&event);
        let request = SmsRequest::new(self.contacts.to_vec(), body)?;
        let start = t_ms.max(self.clock_ms);
        let report = send_sms(&request, &mut self.modem, start, &self.options.driver);
        self.clock_ms = report.finished_ms;
        for entry in self.modem.take_transcript() {
            self.out.transcript.push(TranscriptLine::At {
                t_ms: entry.t_ms,
                direction: entry.direction,
                bytes: crate::gsm::modem::escape_bytes(&entry.bytes),
            });
        }
        self.out.transcript.push(TranscriptLine::Sms {
            t_ms: report.finished_ms,
            body: request.body,
            outcomes: report.outcomes.clone(),
        });
        self.out.accidents.push(event);
        self.out.reports.push(report);
        Ok(())
    }
}

/// Replay `trace`, alerting `contacts` on each confirmation.
pub fn replay(
    trace: &RideTrace,
    contacts: &[PhoneNumber],
    options: &ReplayOptions,
) -> Result<ReplayOutcome, ReplayError> {
    if contacts.is_empty() {
        return Err(GsmError::NoRecipients.into());
    }
    let mut p = Pipeline {
        options,
        contacts,
        detector: Detector::new(options.detector)?.with_rearm(options.rearm),
        fixes: FixRegister::new(),
        link: PhysioLink::new(),
        modem: ModemEmulator::new(options.modem.clone()),
        queued_lines: Default::default(),
        out: ReplayOutcome {
            transcript: Vec::new(),
            accidents: Vec::new(),
            reports: Vec::new(),
        },
        tilt_samples: 0,
        clock_ms: 0,
    };

    let mut last_t = 0;
    for (i, TraceRecord { t_ms, data }) in trace.records.iter().enumerate() {
        let line = i + 1;
        last_t = *t_ms;
        match data {
            RecordData::Tilt { ax, ay, az } => {
                let sample = TiltSample::new(*t_ms, (*ax).into(), (*ay).into(), (*az).into())
                    .map_err(|source| ReplayError::Record { line, source })?;
                p.on_tilt(sample, line)?;
            }
            RecordData::Nmea { line: text } => p.on_nmea(*t_ms, text, line),
            RecordData::Phy { line: text } => {
                p.link.push(*t_ms, text.as_bytes());
                p.queued_lines.push_back(line);
            }
        }
    }
    p.drain_link();

    let delivered = p.out.reports.iter().map(DeliveryReport::delivered).sum();
    let failed = p.out.reports.iter().map(DeliveryReport::failed).sum();
    p.out.transcript.push(TranscriptLine::Summary {
        t_ms: last_t.max(p.clock_ms),
        accident_confirmed: p.out.accident_confirmed(),
        accidents: p.out.accidents.len(),
        sms_delivered: delivered,
        sms_failed: failed,
        tilt_samples: p.tilt_samples,
        nmea: p.fixes.stats(),
        phy: p.link.stats(),
    });
    Ok(p.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{generate, Scenario, ScenarioKind};

    fn contacts() -> Vec<PhoneNumber> {
        vec!["+8801711111111".parse().unwrap()]
    }

    fn states(out: &ReplayOutcome) -> Vec<(u64, Mode, Mode)> {
        out.transcript
            .iter()
            .filter_map(|l| match l {
                TranscriptLine::State { t_ms, from, to, .. } => Some((*t_ms, *from, *to)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn crash_confirms_once() {
        let trace = generate(&Scenario::new(ScenarioKind::Crash, 40.0, 42)).unwrap();
        let out = replay(&trace, &contacts(), &ReplayOptions::default()).unwrap();
        assert_eq!(
            states(&out),
            vec![
                (10_000, Mode::Monitoring, Mode::Suspected),
                (15_000, Mode::Suspected, Mode::Confirmed)
            ]
        );
        assert_eq!(out.accidents.len(), 1);
        assert_eq!(out.reports[0].delivered(), 1);
        assert_eq!(out.exit_code(), 2);
        let ev = &out.accidents[0];
        assert!(ev.fix.is_some());
        assert!(!ev.physio.unwrap().stale);
    }

    #[test]
    fn wobble_and_ride_stay_quiet() {
        let wobble = generate(&Scenario::new(ScenarioKind::Wobble, 30.0, 42)).unwrap();
        let out = replay(&wobble, &contacts(), &ReplayOptions::default()).unwrap();
        assert_eq!(
            states(&out),
            vec![
                (10_000, Mode::Monitoring, Mode::Suspected),
                (13_000, Mode::Suspected, Mode::Monitoring)
            ]
        );
        assert_eq!(out.exit_code(), 0);

        let ride = generate(&Scenario::new(ScenarioKind::Ride, 30.0, 42)).unwrap();
        let out = replay(&ride, &contacts(), &ReplayOptions::default()).unwrap();
        assert!(states(&out).is_empty());
        assert!(out.reports.is_empty());
    }

    #[test]
    fn stale_vitals_when_wrist_unit_goes_quiet() {
        let mut trace = generate(&Scenario::new(ScenarioKind::Crash, 30.0, 5)).unwrap();
        trace
            .records
            .retain(|r| !matches!(r.data, RecordData::Phy { .. }) || r.t_ms < 3_000);
        let out = replay(&trace, &contacts(), &ReplayOptions::default()).unwrap();
        assert!(out.accidents[0].physio.unwrap().stale);
        let TranscriptLine::Sms { body, .. } = out
            .transcript
            .iter()
            .find(|l| matches!(l, TranscriptLine::Sms { .. }))
            .unwrap()
        else {
            unreachable!()
        };
        assert!(body.contains("(STALE)"));
    }

    #[test]
    fn corrupted_frames_are_logged() {
        let mut trace = generate(&Scenario::new(ScenarioKind::Ride, 10.0, 9)).unwrap();
        let idx = trace
            .records
            .iter()
            .position(|r| matches!(r.data, RecordData::Phy { .. }))
            .unwrap();
        if let RecordData::Phy { line } = &mut trace.records[idx].data {
            *line = line.replacen("PHY,0", "PHY,9", 1);
        }
        let out = replay(&trace, &contacts(), &ReplayOptions::default()).unwrap();
        let dropped: Vec<_> = out
            .transcript
            .iter()
            .filter(|l| matches!(l, TranscriptLine::Dropped { stream: "phy", .. }))
            .collect();
        assert_eq!(dropped.len(), 1);
        assert!(matches!(dropped[0], TranscriptLine::Dropped { line, .. } if *line == idx + 1));
    }

    #[test]
    fn rearm_allows_second_episode() {
        let crash = generate(&Scenario::new(ScenarioKind::Crash, 20.0, 1).crash_at(2.0)).unwrap();
        let mut records: Vec<_> = crash
            .records
            .iter()
            .filter(|r| r.t_ms < 8_000 || !matches!(r.data, RecordData::Tilt { .. }))
            .cloned()
            .collect();
        // Upright again from 8 s to 10 s, then down for good.
        for t in (8_000..20_000).step_by(100) {
            let ay = if t < 10_000 { 0 } else { -300 };
            records.push(TraceRecord::tilt(TiltSample::new(t, 0, ay, 250).unwrap()));
        }
        records.sort_by_key(|r| r.t_ms);
        let trace = RideTrace { records };

        let once = replay(&trace, &contacts(), &ReplayOptions::default()).unwrap();
        assert_eq!(once.accidents.len(), 1);

        let options = ReplayOptions {
            rearm: true,
            ..ReplayOptions::default()
        };
        let twice = replay(&trace, &contacts(), &options).unwrap();
        assert_eq!(twice.accidents.len(), 2);
        assert_eq!(twice.accidents[1].detected_at_ms, 10_000);
    }

    #[test]
    fn empty_contacts_rejected() {
        let trace = RideTrace::default();
        assert!(replay(&trace, &[], &ReplayOptions::default()).is_err());
    }
}
