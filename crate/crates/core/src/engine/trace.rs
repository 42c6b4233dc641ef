use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row of the loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `‖(W − Θ) C^{1/2}‖_F / ‖W‖_F`.
    pub normalized_loss: f64,
    /// `‖(W − Θ) C‖_F / ‖W‖_F`.
    pub grad_norm: f64,
    /// Pruning ratio in force at this iteration.
    pub ratio: f64,
}

/// Per-iteration record, starting with the initialization at iteration 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    records: Vec<TraceRecord>,
}

impl LossTrace {
    pub fn from_records(records: Vec<TraceRecord>) -> Self {
        Self { records }
    }

    pub(crate) fn push(&mut self, r: TraceRecord) {
        self.records.push(r);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// True when the normalized loss never rises by more than `slack`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].normalized_loss <= w[0].normalized_loss + slack)
    }

    /// CSV with header `iter,normalized_loss,grad_norm,ratio`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,normalized_loss,grad_norm,ratio")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{}",
                r.iter, r.normalized_loss, r.grad_norm, r.ratio
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}
