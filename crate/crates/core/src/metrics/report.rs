//! Per-scene score tables and their summaries.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Bootstrap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scene_id: String,
    pub condition: String,
    /// Block length or fragment context in ms (`whole` for full fragments).
    pub block_or_context_ms: String,
    pub assa: f64,
    pub swaps: usize,
}

pub fn write_report<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in rows {
        wtr.serialize(r)?;
    }
    if rows.is_empty() {
        wtr.write_record([
            "scene_id",
            "condition",
            "block_or_context_ms",
            "assa",
            "swaps",
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<report>", e))
}

pub fn read_report<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Aggregate of one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub condition: String,
    pub block_or_context_ms: String,
    pub scenes: usize,
    pub mean_assa: f64,
    pub bootstrap: Option<Bootstrap>,
    pub mean_swaps: f64,
}

impl Summary {
    /// Summaries per (condition, block_or_context_ms), in first-seen order.
    pub fn from_rows(
        rows: &[ReportRow],
        iterations: usize,
        fraction: f64,
        seed: u64,
    ) -> Vec<Summary> {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in rows {
            let k = (r.condition.as_str(), r.block_or_context_ms.as_str());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.into_iter()
            .map(|(c, b)| {
                let sel: Vec<&ReportRow> = rows
                    .iter()
                    .filter(|r| r.condition == c && r.block_or_context_ms == b)
                    .collect();
                let scores: Vec<f64> = sel.iter().map(|r| r.assa).collect();
                let n = sel.len() as f64;
                Summary {
                    condition: c.to_string(),
                    block_or_context_ms: b.to_string(),
                    scenes: sel.len(),
                    mean_assa: scores.iter().sum::<f64>() / n,
                    bootstrap: super::bootstrap_assa(&scores, fraction, iterations, seed).ok(),
                    mean_swaps: sel.iter().map(|r| r.swaps as f64).sum::<f64>() / n,
                }
            })
            .collect()
    }
}
