//! Motorbike crash detection and notification pipeline.
//!
//! The helmet unit samples a 3-axis accelerometer, watches for the x or y
//! reading to leave the ±200 count band for a full confirmation window, then
//! snapshots the latest GPS fix and wrist-unit vitals and texts them to the
//! emergency contacts through a SIM800L-style modem.
//!
//! Everything runs on injected timestamps, so a recorded ride replays
//! byte-identically:
//!
//! - [`detection`]: tilt classification and the confirmation state machine
//! - [`nmea`]: GGA/RMC parsing and the last-known-position register
//! - [`telemetry`]: the wrist-unit line protocol, smoothing and display text
//! - [`gsm`]: SMS composition, the AT-command driver and the modem emulator
//! - [`sim`]: ride trace generation, replay, power budget and BOM reports

pub mod config;
pub mod detection;
pub mod gsm;
pub mod nmea;
pub mod scalar;
pub mod sim;
pub mod telemetry;

pub use scalar::Scalar;

/// Vitals reading at the default precision.
pub type Reading = telemetry::PhysioReading<f64>;
/// Vitals reading for `f32` targets.
pub type ReadingF32 = telemetry::PhysioReading<f32>;
/// Wrist-unit frame at the default precision.
pub type Frame = telemetry::TelemetryFrame<f64>;
/// Wrist-unit frame for `f32` targets.
pub type FrameF32 = telemetry::TelemetryFrame<f32>;
/// Confirmed accident carrying an `f64` vitals snapshot.
pub type Accident = detection::AccidentEvent<f64>;
/// Power profile at the default precision.
pub type PowerProfile = sim::power::PowerProfile<f64>;
/// Power profile for `f32` targets.
pub type PowerProfileF32 = sim::power::PowerProfile<f32>;
/// Power report at the default precision.
pub type PowerReport = sim::power::PowerReport<f64>;
/// Power report for `f32` targets.
pub type PowerReportF32 = sim::power::PowerReport<f32>;
