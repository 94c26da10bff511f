//! Synthetic rides.
//!
//! - `Ride`: tilt noise within ±120 counts, steady vitals.
//! - `Crash`: at `crash_at_s` the y axis drops to -250±10 and stays there;
//!   pulse climbs to 110 bpm and SpO2 sinks to 92 % over 30 s.
//! - `Wobble`: the y axis dips below -200 for exactly 3 s, then recovers.
//!
//! Tilt is sampled every 100 ms, the GPS emits one GGA per second at +250 ms
//! and the wrist unit one frame per second at +550 ms. Output depends only on
//! the scenario (ChaCha8 seeded from `seed`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::{RideTrace, TraceRecord};
use crate::detection::TiltSample;
use crate::nmea::{format_gga, FixQuality, GeoFix, LatLon, UtcTime};
use crate::telemetry::{encode_frame, TelemetryFrame};

pub const TILT_PERIOD_MS: u64 = 100;
pub const NMEA_OFFSET_MS: u64 = 250;
pub const PHY_OFFSET_MS: u64 = 550;
pub const WOBBLE_MS: u64 = 3_000;
pub const DEFAULT_EVENT_AT_S: f64 = 10.0;
/// Ride start position.
pub const START: (f64, f64) = (23.7808, 90.4219);
/// GPS clock at t = 0; puts a crash at 10 s at 23:05:47 UTC.
pub const START_UTC: UtcTime = UtcTime {
    hour: 23,
    minute: 5,
    millis: 37_000,
};

const RIDE_NOISE: i32 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScenarioKind {
    Ride,
    Crash,
    Wobble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioKind,
    pub duration_s: f64,
    pub seed: u64,
    pub crash_at_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("duration must be positive and finite")]
    BadDuration,
    #[error("event time {at}s must fall inside the {duration}s ride")]
    EventOutsideRide { at: f64, duration: f64 },
}

impl Scenario {
    pub fn new(name: ScenarioKind, duration_s: f64, seed: u64) -> Self {
        Self {
            name,
            duration_s,
            seed,
            crash_at_s: None,
        }
    }

    pub fn crash_at(mut self, s: f64) -> Self {
        self.crash_at_s = Some(s);
        self
    }

    fn event_ms(&self) -> Option<u64> {
        match self.name {
            ScenarioKind::Ride => None,
            _ => {
                let ms = (self.crash_at_s.unwrap_or(DEFAULT_EVENT_AT_S) * 1000.0).ceil() as u64;
                // Align to the next tilt sample.
                Some(ms.div_ceil(TILT_PERIOD_MS) * TILT_PERIOD_MS)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ScenarioError::BadDuration);
        }
        let at = self.crash_at_s.unwrap_or(DEFAULT_EVENT_AT_S);
        let tail = if self.name == ScenarioKind::Wobble {
            WOBBLE_MS as f64 / 1000.0
        } else {
            0.0
        };
        let applies = self.name != ScenarioKind::Ride || self.crash_at_s.is_some();
        if applies && !(at >= 0.0 && at + tail < self.duration_s) {
            return Err(ScenarioError::EventOutsideRide {
                at,
                duration: self.duration_s,
            });
        }
        Ok(())
    }
}

fn tenths(v: f64) -> f64 {
    (v * 10.0).round() / 10.0
}

pub fn generate(scenario: &Scenario) -> Result<RideTrace, ScenarioError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let duration_ms = (scenario.duration_s * 1000.0).round() as u64;
    let event_ms = scenario.event_ms();
    let crashed = |t: u64| scenario.name == ScenarioKind::Crash && event_ms.is_some_and(|e| t >= e);

    let mut records = Vec::new();
    let mut position = START;
    let mut seq: u16 = 0;

    let mut t = 0;
    while t < duration_ms {
        let (ax, ay, az) = match (scenario.name, event_ms) {
            (ScenarioKind::Crash, Some(e)) if t >= e => (
                rng.gen_range(-60..=60),
                rng.gen_range(-260..=-240),
                rng.gen_range(-20..=20),
            ),
            (ScenarioKind::Wobble, Some(e)) if (e..e + WOBBLE_MS).contains(&t) => (
                rng.gen_range(-RIDE_NOISE..=RIDE_NOISE),
                rng.gen_range(-260..=-210),
                rng.gen_range(200..=240),
            ),
            _ => (
                rng.gen_range(-RIDE_NOISE..=RIDE_NOISE),
                rng.gen_range(-RIDE_NOISE..=RIDE_NOISE),
                rng.gen_range(236..=276),
            ),
        };
        let sample = TiltSample::new(t, ax, ay, az).expect("generated within full scale");
        records.push(TraceRecord::tilt(sample));

        if t % 1000 == 0 {
            let second = t / 1000;
            let gps_t = t + NMEA_OFFSET_MS;
            if gps_t < duration_ms {
                if !crashed(gps_t) {
                    position.0 += rng.gen_range(0.00002..0.00006);
                    position.1 += rng.gen_range(0.00002..0.00006);
                }
                let fix = GeoFix {
                    timestamp_utc: Some(UtcTime::offset_from(START_UTC, gps_t)),
                    satellites: Some(rng.gen_range(6..=10)),
                    ..GeoFix::with_position(
                        LatLon::new(position.0, position.1).expect("near start"),
                        FixQuality::GpsFix,
                    )
                };
                records.push(TraceRecord::nmea(gps_t, format_gga(&fix)));
            }

            let phy_t = t + PHY_OFFSET_MS;
            if phy_t < duration_ms {
                let (pulse, spo2) = match event_ms {
                    Some(e) if crashed(phy_t) => {
                        let p = ((phy_t - e) as f64 / 30_000.0).min(1.0);
                        (
                            75.0 + 35.0 * p + rng.gen_range(-2.0..=2.0),
                            97.0 - 5.0 * p + rng.gen_range(-0.5..=0.5),
                        )
                    }
                    _ => (
                        75.0 + rng.gen_range(-5.0..=5.0),
                        97.0 + rng.gen_range(-1.0..=1.0),
                    ),
                };
                let frame = TelemetryFrame::<f64> {
                    seq,
                    pulse_bpm: tenths(pulse),
                    spo2_pct: tenths(spo2).min(100.0),
                    battery_mv: 3_900u16.saturating_sub((second / 10) as u16),
                };
                records.push(TraceRecord::phy(
                    phy_t,
                    encode_frame(&frame).expect("generated in range"),
                ));
                seq = seq.wrapping_add(1);
            }
        }
        t += TILT_PERIOD_MS;
    }
    records.sort_by_key(|r| r.t_ms);
    Ok(RideTrace { records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unstable_times(trace: &RideTrace) -> Vec<u64> {
        trace
            .tilt_samples()
            .filter(|(_, ax, ay, _)| ax.abs() > 200 || ay.abs() > 200)
            .map(|(t, ..)| t)
            .collect()
    }

    #[test]
    fn deterministic_per_seed() {
        let s = Scenario::new(ScenarioKind::Crash, 30.0, 7);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
        assert_ne!(
            generate(&s).unwrap(),
            generate(&Scenario { seed: 8, ..s }).unwrap()
        );
    }

    #[test]
    fn ride_stays_inside_band() {
        let trace = generate(&Scenario::new(ScenarioKind::Ride, 60.0, 42)).unwrap();
        assert!(unstable_times(&trace).is_empty());
        assert_eq!(trace.tilt_samples().count(), 600);
        trace.validate().unwrap();
    }

    #[test]
    fn crash_starts_at_event_time() {
        let trace = generate(&Scenario::new(ScenarioKind::Crash, 30.0, 1).crash_at(10.0)).unwrap();
        let unstable = unstable_times(&trace);
        assert_eq!(unstable[0], 10_000);
        assert_eq!(*unstable.last().unwrap(), 29_900);
        assert_eq!(unstable.len(), 200);
    }

    #[test]
    fn event_time_rounds_up_to_a_sample() {
        let trace = generate(&Scenario::new(ScenarioKind::Crash, 30.0, 1).crash_at(10.05)).unwrap();
        assert_eq!(unstable_times(&trace)[0], 10_100);
    }

    #[test]
    fn wobble_is_three_seconds() {
        let trace = generate(&Scenario::new(ScenarioKind::Wobble, 30.0, 3).crash_at(5.0)).unwrap();
        let unstable = unstable_times(&trace);
        assert_eq!(unstable.first(), Some(&5_000));
        assert_eq!(unstable.last(), Some(&7_900));
        assert_eq!(unstable.len(), 30);
    }

    #[test]
    fn invalid_scenarios() {
        assert!(generate(&Scenario::new(ScenarioKind::Ride, 0.0, 1)).is_err());
        assert!(generate(&Scenario::new(ScenarioKind::Crash, 10.0, 1).crash_at(10.0)).is_err());
        assert!(generate(&Scenario::new(ScenarioKind::Wobble, 12.0, 1).crash_at(10.0)).is_err());
        assert!(generate(&Scenario::new(ScenarioKind::Crash, 5.0, 1)).is_err());
    }
}
