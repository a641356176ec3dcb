//! Learning curves and per-relation timing logs.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub round: usize,
    /// Wall-clock seconds since training started, at the end of the round.
    pub seconds: f64,
    /// Summed per-relation Monte-Carlo estimate of the training BPR loss.
    pub train_loss: f64,
    pub valid_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    /// Loss estimate of the initial parameters; `None` when no round ran.
    pub initial_loss: Option<f64>,
    pub rows: Vec<CurveRow>,
}

/// Whether the `seconds` column is filled with wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Clock {
    #[default]
    Wall,
    /// Leave `seconds` empty so that files are byte-reproducible.
    Off,
}

impl LearningCurve {
    pub fn final_loss(&self) -> Option<f64> {
        self.rows.last().map(|r| r.train_loss)
    }

    /// CSV with header `round,seconds,train_loss,valid_auc`.
    pub fn write_csv<W: Write>(&self, out: W, clock: Clock) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "seconds", "train_loss", "valid_auc"])?;
        for row in &self.rows {
            let seconds = match clock {
                Clock::Wall => format!("{:.6}", row.seconds),
                Clock::Off => String::new(),
            };
            w.write_record([
                row.round.to_string(),
                seconds,
                format!("{:.10}", row.train_loss),
                row.valid_auc.map(|a| format!("{a:.10}")).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<learning curve>", e))
    }
}

/// Time one unit of work (relation or DMF target) took in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub round: usize,
    pub unit: usize,
    pub samples: usize,
    pub seconds: f64,
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "unit", "samples", "seconds"])?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.unit.to_string(),
            r.samples.to_string(),
            format!("{:.6}", r.seconds),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<timing>", e))
}
