//! Ride traces, replay harness and the hardware reports.

pub mod bom;
pub mod power;
pub mod replay;
pub mod scenario;
pub mod trace;

pub use bom::{bom_total, BomRow, BomTable};
pub use power::{power_budget, PowerComponent, RailMismatch};
pub use replay::{replay, ReplayOptions, ReplayOutcome, TranscriptLine};
pub use scenario::{generate, Scenario, ScenarioKind};
pub use trace::{RecordData, RideTrace, TraceRecord};

/// Shipped data files, embedded so reports work without the repo checkout.
pub mod data {
    /// Component supply ranges and currents of the helmet unit.
    pub const POWER_PROFILE_CSV: &str = include_str!("../../data/power_profile.csv");
    /// Accelerometer-based build.
    pub const BOM_ACCELEROMETER_CSV: &str = include_str!("../../data/bom_accelerometer.csv");
    /// Force-sensing-resistor alternative.
    pub const BOM_FSR_CSV: &str = include_str!("../../data/bom_fsr.csv");
    /// Drowsiness-camera alternative.
    pub const BOM_DROWSINESS_CSV: &str = include_str!("../../data/bom_drowsiness.csv");
    /// Battery of the accelerometer build.
    pub const DEFAULT_CAPACITY_MAH: f64 = 2500.0;
}
