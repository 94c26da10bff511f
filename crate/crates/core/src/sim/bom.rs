//! Bill-of-materials cost totals, in whole taka.

use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BomError {
    #[error("{0}: quantity must be at least 1")]
    ZeroQuantity(String),
    #[error("bom csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BomRow {
    pub component: String,
    pub quantity: u32,
    pub unit_price_bdt: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BomTable {
    pub rows: Vec<BomRow>,
}

impl BomTable {
    pub fn new(rows: Vec<BomRow>) -> Result<Self, BomError> {
        if let Some(r) = rows.iter().find(|r| r.quantity == 0) {
            return Err(BomError::ZeroQuantity(r.component.clone()));
        }
        Ok(Self { rows })
    }

    /// Columns: `component,quantity,unit_price_bdt`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, BomError> {
        let rows = csv::Reader::from_reader(reader)
            .deserialize()
            .collect::<Result<Vec<BomRow>, _>>()?;
        Self::new(rows)
    }
}

pub fn bom_total(table: &BomTable) -> u64 {
    table
        .rows
        .iter()
        .map(|r| u64::from(r.quantity) * r.unit_price_bdt)
        .sum()
}
