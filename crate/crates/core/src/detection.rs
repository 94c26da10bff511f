//! Tilt-threshold accident detection.
//!
//! A sample is unstable when its x or y reading leaves the permitted band
//! `[-threshold, +threshold]` (the boundary itself is inside). The machine
//! moves to `Suspected` on the first unstable sample and confirms once the
//! unstable run has lasted `confirm_window_ms`, measured between sample
//! timestamps. One stable sample cancels the suspicion. `Confirmed` is
//! terminal until the caller re-arms.
//!
//! The z axis is carried for completeness and never looked at.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nmea::GeoFix;
use crate::scalar::Scalar;
use crate::telemetry::PhysioReading;

/// Full-scale raw count magnitude of the accelerometer.
pub const FULL_SCALE_COUNTS: i16 = 512;

/// Age beyond which vitals are flagged stale when attached to an event.
pub const DEFAULT_STALENESS_MS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectionError {
    #[error("{axis} reading {value} outside full scale ±{FULL_SCALE_COUNTS}")]
    OutOfRange { axis: char, value: i32 },
    #[error("sample at {got} ms does not follow previous sample at {previous} ms")]
    NonMonotonic { previous: u64, got: u64 },
    #[error("invalid detector config: {0}")]
    InvalidConfig(&'static str),
}

/// One accelerometer reading in raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TiltSample {
    pub timestamp_ms: u64,
    pub ax: i16,
    pub ay: i16,
    pub az: i16,
}

impl TiltSample {
    pub fn new(timestamp_ms: u64, ax: i32, ay: i32, az: i32) -> Result<Self, DetectionError> {
        let check = |axis, value: i32| {
            if value.abs() > i32::from(FULL_SCALE_COUNTS) {
                Err(DetectionError::OutOfRange { axis, value })
            } else {
                Ok(value as i16)
            }
        };
        Ok(Self {
            timestamp_ms,
            ax: check('x', ax)?,
            ay: check('y', ay)?,
            az: check('z', az)?,
        })
    }

    fn validate(&self) -> Result<(), DetectionError> {
        Self::new(
            self.timestamp_ms,
            self.ax.into(),
            self.ay.into(),
            self.az.into(),
        )
        .map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub threshold_counts: u16,
    pub confirm_window_ms: u64,
    pub sample_period_ms: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_counts: 200,
            confirm_window_ms: 5_000,
            sample_period_ms: 100,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.threshold_counts == 0 || self.confirm_window_ms == 0 || self.sample_period_ms == 0 {
            return Err(DetectionError::InvalidConfig("all fields must be positive"));
        }
        if self.threshold_counts >= FULL_SCALE_COUNTS as u16 {
            return Err(DetectionError::InvalidConfig(
                "threshold must be below full scale",
            ));
        }
        if self.confirm_window_ms < self.sample_period_ms {
            return Err(DetectionError::InvalidConfig(
                "confirm window shorter than one sample period",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Monitoring,
    Suspected,
    Confirmed,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Monitoring => "MONITORING",
            Mode::Suspected => "SUSPECTED",
            Mode::Confirmed => "CONFIRMED",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DetectorState {
    pub mode: Mode,
    pub suspected_since_ms: Option<u64>,
    pub last_sample: Option<TiltSample>,
}

impl Default for DetectorState {
    fn default() -> Self {
        Self {
            mode: Mode::Monitoring,
            suspected_since_ms: None,
            last_sample: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerAxis {
    X,
    Y,
    Both,
}

/// A confirmed accident plus the context frozen into the alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Serialize", deserialize = "S: Deserialize<'de>"))]
pub struct AccidentEvent<S: Scalar = f64> {
    pub detected_at_ms: u64,
    pub confirmed_at_ms: u64,
    pub trigger_axis: TriggerAxis,
    pub trigger_value: i16,
    pub fix: Option<GeoFix>,
    pub physio: Option<PhysioReading<S>>,
}

pub fn is_unstable(sample: &TiltSample, config: &DetectorConfig) -> bool {
    trigger_of(sample, config).is_some()
}

fn trigger_of(sample: &TiltSample, config: &DetectorConfig) -> Option<(TriggerAxis, i16)> {
    let limit = i32::from(config.threshold_counts);
    let x = i32::from(sample.ax).abs() > limit;
    let y = i32::from(sample.ay).abs() > limit;
    match (x, y) {
        (false, false) => None,
        (true, false) => Some((TriggerAxis::X, sample.ax)),
        (false, true) => Some((TriggerAxis::Y, sample.ay)),
        (true, true) => {
            let value = if sample.ay.unsigned_abs() > sample.ax.unsigned_abs() {
                sample.ay
            } else {
                sample.ax
            };
            Some((TriggerAxis::Both, value))
        }
    }
}

/// Reporting angle for a raw reading: 90° upright, 20° at +200, 160° at -200,
/// clamped to `[0, 180]`.
pub fn tilt_angle_deg<S: Scalar>(reading: i32) -> Result<S, DetectionError> {
    if reading.abs() > i32::from(FULL_SCALE_COUNTS) {
        return Err(DetectionError::OutOfRange {
            axis: '?',
            value: reading,
        });
    }
    let r = S::lit(f64::from(reading));
    let theta = S::lit(90.0) - S::lit(70.0) * r / S::lit(200.0);
    Ok(theta.max(S::zero()).min(S::lit(180.0)))
}

/// Pure transition function.
pub fn ingest_sample<S: Scalar>(
    state: &DetectorState,
    sample: TiltSample,
    config: &DetectorConfig,
) -> Result<(DetectorState, Option<AccidentEvent<S>>), DetectionError> {
    sample.validate()?;
    if let Some(prev) = state.last_sample {
        if sample.timestamp_ms <= prev.timestamp_ms {
            return Err(DetectionError::NonMonotonic {
                previous: prev.timestamp_ms,
                got: sample.timestamp_ms,
            });
        }
    }

    let trigger = trigger_of(&sample, config);
    let mut next = DetectorState {
        last_sample: Some(sample),
        ..*state
    };
    let mut event = None;

    match (state.mode, trigger) {
        (Mode::Confirmed, _) => {}
        (Mode::Monitoring, None) => {}
        (Mode::Monitoring, Some(_)) => {
            next.mode = Mode::Suspected;
            next.suspected_since_ms = Some(sample.timestamp_ms);
        }
        (Mode::Suspected, None) => {
            next.mode = Mode::Monitoring;
            next.suspected_since_ms = None;
        }
        (Mode::Suspected, Some((axis, value))) => {
            let since = state
                .suspected_since_ms
                .expect("suspected state carries its start time");
            if sample.timestamp_ms - since >= config.confirm_window_ms {
                next.mode = Mode::Confirmed;
                event = Some(AccidentEvent {
                    detected_at_ms: since,
                    confirmed_at_ms: sample.timestamp_ms,
                    trigger_axis: axis,
                    trigger_value: value,
                    fix: None,
                    physio: None,
                });
            }
        }
    }
    Ok((next, event))
}

/// Attach the latest fix and vitals to a freshly confirmed event.
///
/// Vitals older than `staleness_ms` at `now_ms` are still attached, flagged
/// stale. Missing data stays missing.
pub fn snapshot_context<S: Scalar>(
    mut event: AccidentEvent<S>,
    latest_fix: Option<&GeoFix>,
    latest_physio: Option<&PhysioReading<S>>,
    now_ms: u64,
    staleness_ms: u64,
) -> AccidentEvent<S> {
    event.fix = latest_fix.cloned();
    event.physio = latest_physio.map(|p| {
        let mut p = *p;
        p.stale = p.stale || now_ms.saturating_sub(p.received_at_ms) > staleness_ms;
        p
    });
    event
}

/// Outcome of feeding one sample to a [`Detector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S: Scalar = f64> {
    pub from: Mode,
    pub to: Mode,
    pub event: Option<AccidentEvent<S>>,
    /// The detector left `Confirmed` because re-arming is enabled and the
    /// sample was stable.
    pub rearmed: bool,
}

/// Owning wrapper around the transition function with an optional re-arm
/// policy: when enabled, the first stable sample after a confirmation
/// returns the machine to `Monitoring`.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    state: DetectorState,
    rearm_on_recovery: bool,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectionError> {
        config.validate()?;
        Ok(Self {
            config,
            state: DetectorState::default(),
            rearm_on_recovery: false,
        })
    }

    pub fn with_rearm(mut self, enabled: bool) -> Self {
        self.rearm_on_recovery = enabled;
        self
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn state(&self) -> &DetectorState {
        &self.state
    }

    /// Explicit re-arm: back to `Monitoring`, keeping the sequencing guard.
    pub fn rearm(&mut self) {
        self.state = DetectorState {
            last_sample: self.state.last_sample,
            ..DetectorState::default()
        };
    }

    pub fn ingest<S: Scalar>(&mut self, sample: TiltSample) -> Result<Step<S>, DetectionError> {
        let from = self.state.mode;
        let (next, event) = ingest_sample(&self.state, sample, &self.config)?;
        self.state = next;
        let mut rearmed = false;
        if from == Mode::Confirmed && self.rearm_on_recovery && !is_unstable(&sample, &self.config)
        {
            self.rearm();
            rearmed = true;
        }
        Ok(Step {
            from,
            to: self.state.mode,
            event,
            rearmed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmea::{FixQuality, LatLon};

    fn s(t: u64, ax: i32, ay: i32) -> TiltSample {
        TiltSample::new(t, ax, ay, 0).unwrap()
    }

    fn cfg() -> DetectorConfig {
        DetectorConfig::default()
    }

    #[test]
    fn classification_examples() {
        let c = cfg();
        assert!(!is_unstable(&TiltSample::new(0, 0, 0, 256).unwrap(), &c));
        assert!(is_unstable(&TiltSample::new(0, 10, -250, 0).unwrap(), &c));
        assert!(!is_unstable(&TiltSample::new(0, 200, 200, 0).unwrap(), &c));
        assert!(!is_unstable(
            &TiltSample::new(0, -200, -200, 512).unwrap(),
            &c
        ));
    }

    #[test]
    fn sample_range_enforced() {
        assert!(TiltSample::new(0, 513, 0, 0).is_err());
        assert!(TiltSample::new(0, 0, -513, 0).is_err());
        assert!(TiltSample::new(0, 0, 0, 600).is_err());
        assert!(TiltSample::new(0, -512, 512, -512).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = DetectorConfig {
            threshold_counts: 512,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = DetectorConfig {
            confirm_window_ms: 50,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        assert!(Detector::new(bad).is_err());
    }

    #[test]
    fn angle_anchors() {
        assert_eq!(tilt_angle_deg::<f64>(0).unwrap(), 90.0);
        assert_eq!(tilt_angle_deg::<f64>(200).unwrap(), 20.0);
        assert_eq!(tilt_angle_deg::<f64>(-200).unwrap(), 160.0);
        assert_eq!(tilt_angle_deg::<f32>(200).unwrap(), 20.0);
        assert_eq!(tilt_angle_deg::<f64>(512).unwrap(), 0.0);
        assert_eq!(tilt_angle_deg::<f64>(-512).unwrap(), 180.0);
        assert!(tilt_angle_deg::<f64>(513).is_err());
    }

    #[test]
    fn transition_examples() {
        let c = cfg();
        let (st, ev) =
            ingest_sample::<f64>(&DetectorState::default(), s(1000, 0, -250), &c).unwrap();
        assert_eq!(st.mode, Mode::Suspected);
        assert_eq!(st.suspected_since_ms, Some(1000));
        assert!(ev.is_none());

        let (conf, ev) = ingest_sample::<f64>(&st, s(6000, 0, -240), &c).unwrap();
        assert_eq!(conf.mode, Mode::Confirmed);
        let ev = ev.unwrap();
        assert_eq!((ev.detected_at_ms, ev.confirmed_at_ms), (1000, 6000));
        assert_eq!(ev.trigger_axis, TriggerAxis::Y);
        assert_eq!(ev.trigger_value, -240);

        let (back, ev) = ingest_sample::<f64>(&st, s(3000, 0, 0), &c).unwrap();
        assert_eq!(back.mode, Mode::Monitoring);
        assert_eq!(back.suspected_since_ms, None);
        assert!(ev.is_none());

        let (after, ev) = ingest_sample::<f64>(&conf, s(6100, 0, -300), &c).unwrap();
        assert_eq!(after.mode, Mode::Confirmed);
        assert!(ev.is_none());
        let (after, ev) = ingest_sample::<f64>(&after, s(6200, 0, 0), &c).unwrap();
        assert_eq!(after.mode, Mode::Confirmed);
        assert!(ev.is_none());
    }

    #[test]
    fn window_not_reached_one_sample_short() {
        let c = cfg();
        let (st, _) = ingest_sample::<f64>(&DetectorState::default(), s(0, 0, 300), &c).unwrap();
        let (st, ev) = ingest_sample::<f64>(&st, s(4999, 0, 300), &c).unwrap();
        assert_eq!(st.mode, Mode::Suspected);
        assert!(ev.is_none());
        let (_, ev) = ingest_sample::<f64>(&st, s(5000, 0, 300), &c).unwrap();
        assert!(ev.is_some());
    }

    #[test]
    fn both_axes_trigger_reports_larger_magnitude() {
        let c = cfg();
        let (st, _) = ingest_sample::<f64>(&DetectorState::default(), s(0, 300, -250), &c).unwrap();
        let (_, ev) = ingest_sample::<f64>(&st, s(5000, 230, -400), &c).unwrap();
        let ev = ev.unwrap();
        assert_eq!(ev.trigger_axis, TriggerAxis::Both);
        assert_eq!(ev.trigger_value, -400);
    }

    #[test]
    fn non_monotonic_rejected() {
        let c = cfg();
        let (st, _) = ingest_sample::<f64>(&DetectorState::default(), s(100, 0, 0), &c).unwrap();
        assert_eq!(
            ingest_sample::<f64>(&st, s(100, 0, 0), &c).unwrap_err(),
            DetectionError::NonMonotonic {
                previous: 100,
                got: 100
            }
        );
        assert!(ingest_sample::<f64>(&st, s(50, 0, 0), &c).is_err());
    }

    fn confirmed_event() -> AccidentEvent<f64> {
        AccidentEvent {
            detected_at_ms: 10_000,
            confirmed_at_ms: 15_000,
            trigger_axis: TriggerAxis::Y,
            trigger_value: -250,
            fix: None,
            physio: None,
        }
    }

    #[test]
    fn snapshot_attaches_fresh_data() {
        let fix = GeoFix::with_position(LatLon::new(23.7808, 90.4219).unwrap(), FixQuality::GpsFix);
        let physio = PhysioReading::new(82.0, 97.0, 13_000).unwrap();
        let ev = snapshot_context(
            confirmed_event(),
            Some(&fix),
            Some(&physio),
            15_000,
            DEFAULT_STALENESS_MS,
        );
        assert_eq!(ev.fix.as_ref(), Some(&fix));
        let p = ev.physio.unwrap();
        assert!(!p.stale);
        assert_eq!((p.pulse_bpm, p.spo2_pct), (82.0, 97.0));
    }

    #[test]
    fn snapshot_staleness_bound() {
        // 10 s is the bound; exactly at the bound is still fresh.
        for (age, stale) in [
            (15_000, true),
            (10_001, true),
            (10_000, false),
            (9_999, false),
            (0, false),
        ] {
            let physio = PhysioReading::new(82.0, 97.0, 20_000 - age).unwrap();
            let ev = snapshot_context(
                confirmed_event(),
                None,
                Some(&physio),
                20_000,
                DEFAULT_STALENESS_MS,
            );
            assert_eq!(ev.physio.unwrap().stale, stale, "age {age}");
        }
    }

    #[test]
    fn snapshot_missing_stays_missing() {
        let ev =
            snapshot_context::<f64>(confirmed_event(), None, None, 15_000, DEFAULT_STALENESS_MS);
        assert!(ev.fix.is_none());
        assert!(ev.physio.is_none());
    }

    #[test]
    fn detector_rearm_policy() {
        let mut d = Detector::new(cfg()).unwrap();
        d.ingest::<f64>(s(0, 0, -300)).unwrap();
        let step = d.ingest::<f64>(s(5000, 0, -300)).unwrap();
        assert!(step.event.is_some());
        let step = d.ingest::<f64>(s(5100, 0, 0)).unwrap();
        assert_eq!(step.to, Mode::Confirmed);
        assert!(!step.rearmed);

        let mut d = Detector::new(cfg()).unwrap().with_rearm(true);
        d.ingest::<f64>(s(0, 0, -300)).unwrap();
        d.ingest::<f64>(s(5000, 0, -300)).unwrap();
        let step = d.ingest::<f64>(s(5100, 0, -300)).unwrap();
        assert_eq!(step.to, Mode::Confirmed);
        let step = d.ingest::<f64>(s(5200, 0, 0)).unwrap();
        assert!(step.rearmed);
        assert_eq!((step.from, step.to), (Mode::Confirmed, Mode::Monitoring));
        assert!(d.ingest::<f64>(s(5200, 0, 0)).is_err());
    }
}
