use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::data::{DynDataset, SteadyDataset};
use crate::models::Predictor;
use crate::steady_state::{cost_jd, cost_js_hat};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticCostKind {
    /// One-step static cost `Ĵ_s`.
    Hat,
    /// Fixed-point static cost `J_s`.
    Legacy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub j_d: f64,
    pub j_s: f64,
    pub j_sd: f64,
    pub wall_time_ms: f64,
    /// Cumulative model evaluations.
    pub model_evaluations: u64,
}

/// Per-iteration history in the common CSV layout
/// `iteration,j_d,j_s_hat|j_s_legacy,j_sd,wall_time_ms,model_evaluations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub static_cost: StaticCostKind,
    pub entries: Vec<TraceEntry>,
}

impl TrainingTrace {
    pub(crate) fn single<P: Predictor + ?Sized>(
        model: &P,
        zd: &DynDataset,
        zs: &SteadyDataset,
        lambda: f64,
        elapsed: Duration,
        model_evaluations: u64,
    ) -> Result<Self> {
        let j_d = cost_jd(model, zd)?;
        let j_s = cost_js_hat(model, zs)?;
        Ok(Self {
            static_cost: StaticCostKind::Hat,
            entries: vec![TraceEntry {
                iteration: 0,
                j_d,
                j_s,
                j_sd: (1.0 - lambda) * j_d + lambda * j_s,
                wall_time_ms: elapsed.as_secs_f64() * 1e3,
                model_evaluations,
            }],
        })
    }

    pub fn last(&self) -> &TraceEntry {
        self.entries.last().expect("trace is never empty")
    }

    pub fn wall_time_ms(&self) -> f64 {
        self.last().wall_time_ms
    }

    pub fn model_evaluations(&self) -> u64 {
        self.last().model_evaluations
    }

    pub fn write_csv_to<W: Write>(&self, mut w: W) -> Result<()> {
        let static_name = match self.static_cost {
            StaticCostKind::Hat => "j_s_hat",
            StaticCostKind::Legacy => "j_s_legacy",
        };
        writeln!(
            w,
            "iteration,j_d,{static_name},j_sd,wall_time_ms,model_evaluations"
        )?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.iteration, e.j_d, e.j_s, e.j_sd, e.wall_time_ms, e.model_evaluations
            )?;
        }
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}
