use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One evaluation point of a run. Column order in CSV follows field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: u64,
    pub wall_ms: f64,
    /// Mean undiscounted episode return in the environment's own units.
    pub eval_return: f64,
    pub valid_action_rate: f64,
    pub qp_count_cum: u64,
    pub eta: f64,
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub per_action_inference_us: f64,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "step",
    "wall_ms",
    "eval_return",
    "valid_action_rate",
    "qp_count_cum",
    "eta",
    "critic_loss",
    "policy_loss",
    "per_action_inference_us",
];

pub fn write_csv(w: impl Write, rows: &[MetricsRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(CSV_COLUMNS)?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv(r: impl Read) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
