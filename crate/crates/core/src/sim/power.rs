//! Battery runtime estimate from per-component supply current.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Logic rail most parts run from.
pub const RAIL_V: f64 = 3.3;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("profile has no components")]
    NoComponents,
    #[error("{0}: current must be positive")]
    NonPositiveCurrent(String),
    #[error("{0}: vmin above vmax")]
    InvalidVoltageRange(String),
    #[error("battery capacity must be positive")]
    NonPositiveCapacity,
    #[error("profile csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerComponent<S: Scalar = f64> {
    pub name: String,
    pub current_ma: S,
    pub vmin: S,
    pub vmax: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerProfile<S: Scalar = f64> {
    pub components: Vec<PowerComponent<S>>,
    pub battery_capacity_mah: S,
    pub rail_v: S,
}

#[derive(Debug, Deserialize)]
struct ProfileRow {
    component: String,
    #[serde(rename = "current_mA")]
    current_ma: f64,
    vmin: f64,
    vmax: f64,
}

impl<S: Scalar> PowerProfile<S> {
    pub fn new(components: Vec<PowerComponent<S>>, battery_capacity_mah: S) -> Self {
        Self {
            components,
            battery_capacity_mah,
            rail_v: S::lit(RAIL_V),
        }
    }

    /// Columns: `component,current_mA,vmin,vmax`.
    pub fn from_csv<R: Read>(reader: R, battery_capacity_mah: S) -> Result<Self, PowerError> {
        let mut components = Vec::new();
        for row in csv::Reader::from_reader(reader).deserialize() {
            let row: ProfileRow = row?;
            components.push(PowerComponent {
                name: row.component,
                current_ma: S::lit(row.current_ma),
                vmin: S::lit(row.vmin),
                vmax: S::lit(row.vmax),
            });
        }
        Ok(Self::new(components, battery_capacity_mah))
    }
}

/// A component whose supply window does not include the logic rail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RailMismatch<S: Scalar = f64> {
    pub component: String,
    pub vmin: S,
    pub vmax: S,
    pub rail_v: S,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerReport<S: Scalar = f64> {
    pub total_current_ma: S,
    pub runtime_h: S,
    pub battery_capacity_mah: S,
    pub flagged: Vec<RailMismatch<S>>,
}

pub fn power_budget<S: Scalar>(profile: &PowerProfile<S>) -> Result<PowerReport<S>, PowerError> {
    if profile.components.is_empty() {
        return Err(PowerError::NoComponents);
    }
    if profile.battery_capacity_mah.is_nan() || profile.battery_capacity_mah <= S::zero() {
        return Err(PowerError::NonPositiveCapacity);
    }
    let mut total = S::zero();
    let mut flagged = Vec::new();
    for c in &profile.components {
        if c.current_ma.is_nan() || c.current_ma <= S::zero() {
            return Err(PowerError::NonPositiveCurrent(c.name.clone()));
        }
        if c.vmin > c.vmax {
            return Err(PowerError::InvalidVoltageRange(c.name.clone()));
        }
        total = total + c.current_ma;
        if profile.rail_v < c.vmin || profile.rail_v > c.vmax {
            flagged.push(RailMismatch {
                component: c.name.clone(),
                vmin: c.vmin,
                vmax: c.vmax,
                rail_v: profile.rail_v,
            });
        }
    }
    Ok(PowerReport {
        total_current_ma: total,
        runtime_h: profile.battery_capacity_mah / total,
        battery_capacity_mah: profile.battery_capacity_mah,
        flagged,
    })
}
